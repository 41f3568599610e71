import json
import subprocess
import sys

import pytest

from gbpchain import crypto
from gbpchain.admin import (EXIT_ENDORSEMENT, EXIT_OK, EXIT_PARSE, EXIT_REJECTED, EXIT_TRANSPORT, Deployment,
                            load_key)
from gbpchain.cli import CliConfig, _ServedLedger, make_executor, run_command, split_globals
from gbpchain.ledger.api import LedgerServer


@pytest.fixture
def deploy(tmp_path):
    d = tmp_path / "net"
    code, _ = run_command(["init", str(d), "--orgs", "orga,orgb"], CliConfig())
    assert code == EXIT_OK
    return d


def gbp(deploy, org, *args, json_out=False):
    config = CliConfig(org=org, endpoint=str(deploy), output="json" if json_out else "human")
    return run_command(list(args), config)


def test_create_and_show(deploy):
    code, out = gbp(deploy, "orga", "gbp", "member-create", "alice", "--ip", "10.1.0.5")
    assert code == EXIT_OK and out[0].startswith("committed")
    code, out = gbp(deploy, "orga", "show", "member", "--name", "alice", json_out=True)
    record = json.loads(out[0])
    assert record["found"] and record["body"]["ip"] == "10.1.0.5"


def test_exit_codes(deploy):
    gbp(deploy, "orga", "member-create", "alice")
    assert gbp(deploy, "orga", "frobnicate", "x")[0] == EXIT_PARSE
    assert gbp(deploy, "orga", "member-create")[0] == EXIT_PARSE
    assert gbp(deploy, "orgb", "member-delete", "orga.alice")[0] == EXIT_REJECTED
    assert gbp(deploy, "orga", "member-create", "alice")[0] == EXIT_REJECTED
    assert gbp(deploy, "orgz", "member-create", "zed")[0] == EXIT_PARSE
    assert gbp(deploy.parent / "missing", "orga", "member-create", "x")[0] == EXIT_TRANSPORT


def test_endorsement_failure_exit(tmp_path):
    d = tmp_path / "net"
    Deployment.init(d, ["orga", "orgb"], "AND(orga, orgb, orgc)")
    code, out = gbp(d, "orga", "member-create", "alice")
    assert code == EXIT_ENDORSEMENT
    assert "PolicyUnsatisfied" in out[0]


def test_show_does_not_write(deploy):
    gbp(deploy, "orga", "member-create", "alice")
    height = Deployment(deploy).open().ledger.height
    for _ in range(3):
        assert gbp(deploy, "orga", "show", "access", "--src", "alice", "--dst", "orgb.db")[0] == EXIT_OK
    assert Deployment(deploy).open().ledger.height == height


def test_wrong_key_rejected(deploy, tmp_path):
    key_file = tmp_path / "other.key"
    run_command(["keygen", "--out", str(key_file)], CliConfig())
    config = CliConfig(org="orga", endpoint=str(deploy), key_file=str(key_file))
    code, out = run_command(["member-create", "alice"], config)
    assert code == EXIT_PARSE and "InvalidKey" in out[0]
    config.key_file = str(deploy / "keys" / "orga.key")
    assert run_command(["member-create", "alice"], config)[0] == EXIT_OK


def test_missing_org_or_endpoint():
    assert run_command(["member-create", "x"], CliConfig(endpoint="/nowhere"))[0] == EXIT_PARSE
    assert run_command(["member-create", "x"], CliConfig(org="orga"))[0] == EXIT_PARSE
    assert run_command([], CliConfig())[0] == EXIT_PARSE


def test_split_globals():
    config = CliConfig()
    rest = split_globals(["--org=orga", "--endpoint", "d", "--json", "member-create", "x", "--ip", "1.2.3.4"], config)
    assert rest == ["member-create", "x", "--ip", "1.2.3.4"]
    assert (config.org, config.endpoint, config.output) == ("orga", "d", "json")
    with pytest.raises(ValueError):
        split_globals(["--org"], CliConfig())


def test_env_config():
    config = CliConfig.from_env({"GBP_ORG": "orgb", "GBP_ENDPOINT": "/x"})
    assert (config.org, config.endpoint, config.key_file) == ("orgb", "/x", None)


@pytest.fixture
def served(deploy):
    deployment = Deployment(deploy)
    server = LedgerServer(_ServedLedger(deployment), executor=make_executor(deployment))
    server.start()
    yield server.endpoint, deploy
    server.shutdown()
    server.server_close()


def test_remote_execute(served):
    endpoint, deploy = served
    config = CliConfig(org="orga", endpoint=endpoint, key_file=str(deploy / "keys" / "orga.key"))
    code, out = run_command(["member-create", "alice"], config)
    assert code == EXIT_OK, out
    assert Deployment(deploy).open().ledger.query_state("user:orga.alice") is not None
    code, out = run_command(["--json", "show", "member", "--name", "alice"], config)
    assert code == EXIT_OK and json.loads(out[0])["found"]


def test_remote_needs_matching_key(served, tmp_path):
    endpoint, deploy = served
    config = CliConfig(org="orga", endpoint=endpoint)
    assert run_command(["member-create", "alice"], config)[0] == EXIT_PARSE
    config.key_file = str(deploy / "keys" / "orgb.key")
    code, out = run_command(["member-create", "alice"], config)
    assert code == EXIT_PARSE and "AuthenticationFailed" in out[0]


def test_remote_rejection_code(served):
    endpoint, deploy = served
    a = CliConfig(org="orga", endpoint=endpoint, key_file=str(deploy / "keys" / "orga.key"))
    b = CliConfig(org="orgb", endpoint=endpoint, key_file=str(deploy / "keys" / "orgb.key"))
    run_command(["member-create", "alice"], a)
    assert run_command(["member-delete", "orga.alice"], b)[0] == EXIT_REJECTED


def test_unreachable_endpoint(tmp_path):
    key = tmp_path / "k"
    run_command(["keygen", "--out", str(key)], CliConfig())
    config = CliConfig(org="orga", endpoint="tcp://127.0.0.1:1", key_file=str(key))
    assert run_command(["member-create", "alice"], config)[0] == EXIT_TRANSPORT


def test_keygen_writes_loadable_key(tmp_path):
    path = tmp_path / "k"
    code, out = run_command(["keygen", "--out", str(path)], CliConfig())
    assert code == EXIT_OK
    assert out[0] == f"public {crypto.public_bytes(load_key(path)).hex()}"


def test_init_twice_fails(deploy):
    assert run_command(["init", str(deploy), "--orgs", "orga"], CliConfig())[0] == EXIT_PARSE


def test_console_script(deploy):
    proc = subprocess.run([sys.executable, "-m", "gbpchain.cli", "--org", "orga", "--endpoint", str(deploy),
                           "member-create", "alice"], capture_output=True, text=True)
    assert proc.returncode == EXIT_OK and proc.stdout.startswith("committed")
    proc = subprocess.run([sys.executable, "-m", "gbpchain.cli", "--org", "orga", "--endpoint", str(deploy),
                           "member-create", "al!ce"], capture_output=True, text=True)
    assert proc.returncode == EXIT_PARSE and proc.stderr.startswith("error InvalidName")
