"""Benchmark report container, fit statistics and CSV/JSON output."""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
CSV_COLUMNS = ("schema_version", "experiment", "point", "sample", "warmup", "latency_ns", "bytes", "ops")
MIN_SAMPLES = 30


class InsufficientSamples(ValueError):
    pass


@dataclass
class Point:
    """Measurements at one grid value. Warmup samples are kept apart and never enter statistics."""

    latency_ns: list[int] = field(default_factory=list)
    bytes: list[int] = field(default_factory=list)
    ops: list[int] = field(default_factory=list)
    warmup_latency_ns: list[int] = field(default_factory=list)
    value: float | None = None  # point-level scalar, e.g. total chain bytes

    @property
    def samples(self) -> int:
        return max(len(self.latency_ns), len(self.bytes), len(self.ops))

    @property
    def warmup(self) -> int:
        return len(self.warmup_latency_ns)

    def median_ns(self) -> float:
        return statistics.median(self.latency_ns)

    def quantile_ns(self, q: float) -> float:
        xs = sorted(self.latency_ns)
        return xs[min(len(xs) - 1, int(q * len(xs)))]


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    r2: float
    max_rel_residual: float

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "max_rel_residual": self.max_rel_residual}


def linear_fit(xs, ys) -> Fit:
    xs, ys = [float(x) for x in xs], [float(y) for y in ys]
    slope, intercept = statistics.linear_regression(xs, ys)
    mean = statistics.fmean(ys)
    residuals = [y - (slope * x + intercept) for x, y in zip(xs, ys)]
    ss_res = sum(r * r for r in residuals)
    ss_tot = sum((y - mean) ** 2 for y in ys)
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return Fit(slope, intercept, r2, max(abs(r) for r in residuals) / abs(mean) if mean else 0.0)


def cov(values) -> float:
    values = list(values)
    return statistics.pstdev(values) / statistics.fmean(values)


@dataclass
class BenchReport:
    experiment: str
    grid: list
    seed: int
    points: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)
    ledgers: list = field(default_factory=list, repr=False)  # (live ledger, block log path), for replay checks

    def point(self, key) -> Point:
        return self.points.setdefault(key, Point())

    def check_samples(self, minimum: int = MIN_SAMPLES) -> None:
        for key, p in self.points.items():
            if p.samples < minimum:
                raise InsufficientSamples(f"{self.experiment} point {key}: {p.samples} samples, need {minimum}")

    def medians(self) -> dict:
        return {k: p.median_ns() for k, p in self.points.items() if p.latency_ns}

    def op_counts(self) -> dict:
        return {k: sorted(set(p.ops)) for k, p in self.points.items()}

    def rows(self):
        for key, p in self.points.items():
            for i, lat in enumerate(p.warmup_latency_ns):
                yield (SCHEMA_VERSION, self.experiment, key, i, 1, lat, "", "")
            for i in range(p.samples):
                yield (SCHEMA_VERSION, self.experiment, key, i, 0,
                       p.latency_ns[i] if i < len(p.latency_ns) else "",
                       p.bytes[i] if i < len(p.bytes) else "",
                       p.ops[i] if i < len(p.ops) else "")

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "grid": [str(g) for g in self.grid],
            "seed": self.seed,
            "points": {str(k): {"samples": p.samples, "warmup": p.warmup,
                                "median_ns": p.median_ns() if p.latency_ns else None,
                                "p99_ns": p.quantile_ns(0.99) if p.latency_ns else None,
                                "value": p.value,
                                "ops": sorted(set(p.ops))}
                       for k, p in self.points.items()},
            "stats": self.stats,
            "context": self.context,
        }

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "report.csv", out / "summary.json"
        with csv_path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            w.writerows(self.rows())
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path
