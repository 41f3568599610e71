"""bench <experiment> --grid ... --seed N --out DIR

Experiments: read_latency, write_latency, chain_size, trie_cdf. Each run writes
report.csv and summary.json into DIR. chain_size takes its transaction grid
from --grid and its endorser grid from --endorser-grid.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from . import experiments
from .report import InsufficientSamples


def _ints(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip().replace("_", "")
        if "..." in part or ".." in part:
            lo, hi = part.replace("...", "..").split("..")
            out.extend(range(int(float(lo)), int(float(hi)) + 1))
        elif part:
            out.append(int(float(part)))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=sorted(experiments.EXPERIMENTS))
    p.add_argument("--grid", type=_ints, help="comma list; a..b for ranges; 1e6 accepted")
    p.add_argument("--endorser-grid", type=_ints, help="chain_size only")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--samples", type=int, help="samples per point (read/write latency)")
    p.add_argument("--queries", type=int, help="lookups per point (trie_cdf)")
    p.add_argument("--tx-count", type=int, help="transactions per endorser point (chain_size)")
    p.add_argument("--clients", type=int, default=1, help="concurrent lookup threads (trie_cdf)")
    p.add_argument("--check-replay", action="store_true",
                   help="log every ledger and verify a replay reproduces its state byte for byte")
    return p


def run(ns: argparse.Namespace):
    fn = experiments.EXPERIMENTS[ns.experiment]
    kwargs = {"seed": ns.seed}
    if ns.grid:
        kwargs["tx_grid" if ns.experiment == "chain_size" else "grid"] = ns.grid
    if ns.endorser_grid and ns.experiment == "chain_size":
        kwargs["endorser_grid"] = ns.endorser_grid
    if ns.samples and ns.experiment in ("read_latency", "write_latency"):
        kwargs["samples"] = ns.samples
    if ns.queries and ns.experiment == "trie_cdf":
        kwargs["queries"] = ns.queries
    if ns.tx_count and ns.experiment == "chain_size":
        kwargs["tx_count"] = ns.tx_count
    if ns.experiment == "trie_cdf":
        kwargs["clients"] = ns.clients
    log_dir = None
    if ns.check_replay and ns.experiment in ("write_latency", "chain_size"):
        log_dir = tempfile.mkdtemp(prefix="bench-logs-")
        kwargs["log_dir"] = log_dir
    report = fn(**kwargs)
    if log_dir is not None:
        replay = experiments.verify_replay(report)
        report.stats["replay_identical"] = all(replay.values())
    return report


def main(argv=None) -> None:
    ns = build_parser().parse_args(argv)
    try:
        report = run(ns)
    except (InsufficientSamples, ValueError) as e:
        print(f"bench: {e}", file=sys.stderr)
        sys.exit(1)
    csv_path, json_path = report.write(ns.out)
    print(json.dumps(report.stats, indent=2, sort_keys=True, default=str))
    print(f"wrote {csv_path} and {json_path}")


if __name__ == "__main__":
    main()
