import pytest

from gbpchain import crypto
from gbpchain.clock import ManualClock
from gbpchain.ledger.network import Network
from gbpchain.policy.grammar import parse_command


def org_keys(*orgs):
    return {o: crypto.new_signing_key(crypto.seed_for(f"test:{o}")) for o in orgs}


def run(net, org, line):
    return net.execute(parse_command(line), org)


@pytest.fixture
def clock():
    return ManualClock(0.0)


@pytest.fixture
def net2(clock):
    return Network(org_keys("orga", "orgb"), clock=clock)


@pytest.fixture
def net4(clock):
    return Network(org_keys("org1", "org2", "org3", "org4"), clock=clock)


@pytest.fixture
def scenario(net2):
    """orga.alice reaches orgb.internaldb through the dbaccess group owned by orgb."""
    run(net2, "orga", "gbp member-create alice --ip 10.1.0.5")
    run(net2, "orgb", "gbp group-create dbaccess --add:orga.alice")
    run(net2, "orgb", "gbp member-create internalDB --ip 10.2.0.9")
    run(net2, "orgb", "gbp policy-rule-create external-human-res --src:dbaccess --dst:internalDB --actions allow")
    return net2


CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
