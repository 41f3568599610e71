import dataclasses
import itertools

import pytest
from hypothesis import given, settings, strategies as st

from conftest import org_keys, run
from gbpchain import crypto
from gbpchain.clock import ManualClock
from gbpchain.ledger import (And, BrokenChain, ChaincodeRejection, DuplicateOrg, InvalidKey, KeyAbsent, KeyExists,
                             KOfN, Ledger, Member, Msp, Or, OwnershipViolation, PolicyUnsatisfied,
                             SimulationMismatch, TwoFPlusOne, all_of, endorse, evaluate, majority, parse_policy,
                             to_text)
from gbpchain.ledger.assets import Asset, AssetKind, make_policy, make_user
from gbpchain.ledger.chaincode import simulate_chaincode
from gbpchain.ledger.network import Network
from gbpchain.ledger.orderer import SoloOrderer
from gbpchain.ledger.state import StateStore
from gbpchain.ledger.tx import (Block, CutReason, Endorsement, Transaction, TransactionProposal, TxStatus, Write,
                                WriteMode)
from gbpchain.policy.grammar import Action, parse_command
from gbpchain.policy.render import render_proposal


# membership service --------------------------------------------------------

def test_register_four_orgs():
    msp = Msp()
    for org, key in org_keys("org1", "org2", "org3", "org4").items():
        msp.register_org(org, crypto.public_bytes(key))
    assert msp.org_ids() == ["org1", "org2", "org3", "org4"]


def test_register_duplicate():
    msp = Msp()
    key = crypto.public_bytes(crypto.new_signing_key())
    msp.register_org("org1", key)
    with pytest.raises(DuplicateOrg):
        msp.register_org("org1", key)


@pytest.mark.parametrize("raw", [b"", b"\x01" * 31, b"\x01" * 33, "not bytes"])
def test_register_malformed_key(raw):
    with pytest.raises(InvalidKey):
        Msp().register_org("org1", raw)


def test_network_register_org_via_config_block(net2):
    before = net2.ledger.height
    net2.register_org("orgc", crypto.new_signing_key())
    assert net2.ledger.height == before + 1
    assert net2.ledger.blocks[-1].cut_reason is CutReason.CONFIG
    assert run(net2, "orgc", "gbp member-create carol").valid
    with pytest.raises(DuplicateOrg):
        net2.register_org("orgc")


# chaincode ------------------------------------------------------------------

def _proposal(net, org, line):
    return render_proposal(parse_command(line), org, net.ledger.state, 0.0, net.next_nonce())


def test_owner_create_accepted():
    state = StateStore()
    p = TransactionProposal("orga", (Write("user:orga.alice", WriteMode.CREATE, make_user("orga", "alice").to_bytes()),),
                            0.0, 1)
    reads, writes = simulate_chaincode(p, state)
    assert writes == p.writes
    assert ("user:orga.alice", None) in {(r.key, r.version) for r in reads}


def test_recreate_rejected(net2):
    run(net2, "orga", "gbp member-create alice")
    with pytest.raises(KeyExists):
        simulate_chaincode(_proposal(net2, "orga", "gbp member-create alice"), net2.ledger.state)


def test_cross_org_delete_rejected(net2):
    run(net2, "orga", "gbp member-create alice")
    with pytest.raises(OwnershipViolation):
        simulate_chaincode(_proposal(net2, "orgb", "gbp member-delete orga.alice"), net2.ledger.state)


def test_create_under_foreign_owner_rejected():
    asset = make_user("orga", "alice")
    p = TransactionProposal("orgb", (Write(asset.key, WriteMode.CREATE, asset.to_bytes()),), 0.0, 1)
    with pytest.raises(OwnershipViolation):
        simulate_chaincode(p, StateStore())


def test_mutate_missing_rejected():
    p = TransactionProposal("orga", (Write("user:orga.ghost", WriteMode.DELETE),), 0.0, 1)
    with pytest.raises(KeyAbsent):
        simulate_chaincode(p, StateStore())


def test_name_shared_across_kinds(net2):
    run(net2, "orga", "gbp member-create db")
    with pytest.raises(KeyExists):
        simulate_chaincode(_proposal(net2, "orga", "gbp resource-create db --ip 10.0.0.1"), net2.ledger.state)


def test_policy_needs_owned_destination(net2):
    run(net2, "orga", "gbp member-create alice")
    run(net2, "orgb", "gbp resource-create db --ip 10.2.0.1")
    with pytest.raises(OwnershipViolation):
        simulate_chaincode(_proposal(net2, "orga", "gbp policy-rule-create r --src:alice --dst:orgb.db"),
                           net2.ledger.state)


def test_policy_expiry_must_follow_creation():
    asset = make_policy("orgb", "orga.alice", "orgb.db", "allow", "r", created=10.0, expiry=10.0)
    with pytest.raises(ValueError):
        asset.validate()


# endorsement ----------------------------------------------------------------

def test_four_distinct_endorsements(net4):
    p = net4.propose(parse_command("gbp member-create alice"), "org1")
    ends = net4.collect_endorsements(p)
    assert sorted(e.endorser for e in ends) == ["org1", "org2", "org3", "org4"]


def test_diverged_endorser_mismatch(net4):
    run(net4, "org1", "gbp member-create alice")
    forked = net4.fork_peer_state("org2")
    key = "user:org1.alice"
    forked.put(key, forked.value(key), (99, 0))  # a commit only this replica saw
    p = net4.propose(parse_command("gbp group-create g --add:alice"), "org1")
    with pytest.raises(SimulationMismatch):
        endorse(p, net4.peers["org2"])
    assert endorse(p, net4.peers["org3"]).endorser == "org3"


def test_endorse_ownership_violation(net4):
    run(net4, "org1", "gbp member-create alice")
    p = TransactionProposal("org2", (Write("user:org1.alice", WriteMode.DELETE),), 0.0, 77)
    with pytest.raises(ChaincodeRejection):
        endorse(p, net4.peers["org3"])


def test_unsatisfied_policy_not_submitted(net4):
    p = net4.propose(parse_command("gbp member-create alice"), "org1")
    with pytest.raises(PolicyUnsatisfied):
        net4.transact(p, endorsers=["org1", "org2", "org3"])


# policy expressions ------------------------------------------------------------

ORGS4 = ["org1", "org2", "org3", "org4"]


def test_and_needs_everyone():
    assert not evaluate(all_of(ORGS4), {"org1", "org2", "org3"})
    assert evaluate(all_of(ORGS4), set(ORGS4))


def test_two_f_plus_one():
    orgs = [f"o{i}" for i in range(7)]
    expr = TwoFPlusOne(2, tuple(orgs))
    assert expr.threshold == 5
    assert evaluate(expr, orgs[:5])
    assert not evaluate(expr, orgs[:4])


def test_a_or_bcd():
    expr = Or((Member("org-a"), And((Member("org-b"), Member("org-c"), Member("org-d")))))
    assert evaluate(expr, {"org-b", "org-c", "org-d"})
    assert evaluate(expr, {"org-a"})
    assert not evaluate(expr, {"org-b", "org-c"})


def test_duplicates_count_once():
    assert not evaluate(KOfN(2, ("a", "b", "c")), ["a", "a", "a"])


def test_majority():
    expr = majority(["a", "b", "c", "d"])
    assert expr.k == 3


ORG_POOL = [f"o{i}" for i in range(6)]
org_sets = st.sets(st.sampled_from(ORG_POOL))


@st.composite
def exprs(draw, depth=2):
    if depth == 0 or draw(st.booleans()):
        orgs = tuple(draw(st.lists(st.sampled_from(ORG_POOL), min_size=1, max_size=4, unique=True)))
        if len(orgs) == 1 and draw(st.booleans()):
            return Member(orgs[0])
        return KOfN(draw(st.integers(1, len(orgs))), orgs)
    kids = tuple(draw(st.lists(exprs(depth=depth - 1), min_size=1, max_size=3)))
    return And(kids) if draw(st.booleans()) else Or(kids)


def _oracle(expr, endorsers):
    if isinstance(expr, Member):
        return expr.org in endorsers
    if isinstance(expr, KOfN):
        return any(set(combo) <= endorsers for combo in itertools.combinations(expr.orgs, expr.k))
    results = [_oracle(c, endorsers) for c in expr.children]
    return all(results) if isinstance(expr, And) else any(results)


@given(exprs(), org_sets)
def test_evaluate_matches_subset_oracle(expr, endorsers):
    assert evaluate(expr, endorsers) == _oracle(expr, endorsers)


@given(exprs(), org_sets, org_sets)
def test_evaluate_monotone(expr, a, b):
    if evaluate(expr, a):
        assert evaluate(expr, a | b)


@given(exprs())
def test_policy_text_round_trip_property(expr):
    assert parse_policy(to_text(expr)) == expr


@pytest.mark.parametrize("make", [
    lambda: KOfN(0, ("a",)),
    lambda: KOfN(3, ("a", "b")),
    lambda: KOfN(1, ("a", "a")),
    lambda: TwoFPlusOne(1, ("a", "b", "c")),
    lambda: And(()),
])
def test_invalid_expressions(make):
    with pytest.raises(ValueError):
        make()


@pytest.mark.parametrize("text", ["AND(org1, org2)", "OR(org1, AND(org2, org3))", "OUTOF(2, a, b, c)",
                                  "BFT(1, a, b, c, d)", "MAJORITY(a, b, c)"])
def test_policy_text_round_trip(text):
    expr = parse_policy(text)
    assert parse_policy(to_text(expr)) == expr


# orderer --------------------------------------------------------------------

def _dummy_tx(i):
    p = TransactionProposal("org1", (Write(f"user:org1.u{i}", WriteMode.CREATE, b"{}"),), 0.0, i)
    return Transaction(p, (Endorsement("org1", bytes(64)),))


def test_block_cut_after_timeout():
    o = SoloOrderer(0, bytes(32))
    o.submit(_dummy_tx(1), 0.0)
    o.submit(_dummy_tx(2), 0.05)
    assert o.cut_block(0.05) is None
    assert o.cut_block(0.099) is None
    block = o.cut_block(0.1)
    assert block.cut_reason is CutReason.TIMEOUT and len(block.transactions) == 2
    assert o.cut_block(10.0) is None


def test_empty_queue_never_cuts():
    o = SoloOrderer(0, bytes(32))
    assert all(o.cut_block(t) is None for t in (0.0, 0.1, 100.0))


def test_block_cut_at_max_count():
    o = SoloOrderer(0, bytes(32))
    for i in range(500):
        o.submit(_dummy_tx(i), 0.0)
    block = o.cut_block(0.0)
    assert block.cut_reason is CutReason.MAX_COUNT and len(block.transactions) == 500
    assert o.cut_block(0.0) is None


def test_orderer_rejects_unendorsed():
    o = SoloOrderer(0, bytes(32))
    with pytest.raises(PolicyUnsatisfied):
        o.submit(Transaction(_dummy_tx(1).proposal, ()), 0.0)


# validation and commit ----------------------------------------------------------

def test_same_key_second_tx_invalid(net4):
    p1 = net4.propose(parse_command("gbp member-create bob --ip 10.0.0.1"), "org1")
    p2 = net4.propose(parse_command("gbp member-create bob --ip 10.0.0.2"), "org1")
    t1 = net4.transact(p1, wait=False)
    t2 = net4.transact(p2, wait=False)
    net4.pump(force=True)
    assert net4.ledger.tx_location(t1.tx_id).status is TxStatus.VALID
    assert net4.ledger.tx_location(t2.tx_id).status is TxStatus.MVCC_READ_CONFLICT
    # serial re-execution oracle: state holds exactly the first write
    assert net4.ledger.query_raw("user:org1.bob") == p1.writes[0].value
    assert len(net4.ledger.blocks[-1].transactions) == 2


def test_tampered_prev_digest(net4):
    p = net4.propose(parse_command("gbp member-create alice"), "org1")
    tx = Transaction(p, tuple(net4.collect_endorsements(p)))
    good = Block(net4.ledger.height + 1, net4.ledger.tip_digest, CutReason.TIMEOUT, 0.1, (tx,))
    bad = dataclasses.replace(good, prev_digest=bytes(32))
    with pytest.raises(BrokenChain):
        net4.ledger.validate_and_commit(bad)
    with pytest.raises(BrokenChain):
        net4.ledger.validate_and_commit(dataclasses.replace(good, height=good.height + 1))
    assert net4.ledger.validate_and_commit(good) == (TxStatus.VALID,)


def test_single_tx_version(net4):
    result = run(net4, "org1", "gbp member-create alice")
    assert net4.ledger.state.version("user:org1.alice") == (result.height, 0)


def test_forged_endorsement_invalid(net4):
    p = net4.propose(parse_command("gbp member-create alice"), "org1")
    ends = list(net4.collect_endorsements(p))
    ends[2] = Endorsement(ends[2].endorser, bytes(64))
    net4.submit(p, ends)
    net4.pump(force=True)
    assert net4.ledger.tx_location(p.proposal_id).status is TxStatus.ENDORSEMENT_POLICY_FAILURE
    assert net4.ledger.query_state("user:org1.alice") is None


def test_verification_count_equals_endorsements(net4):
    before = net4.ledger.signature_verifications
    run(net4, "org1", "gbp member-create alice")
    assert net4.ledger.signature_verifications - before == 4


def test_ownership_rechecked_at_commit(net2):
    """A proposal that skipped chaincode is still refused at validation."""
    run(net2, "orga", "gbp member-create alice")
    state = net2.ledger.state
    p = TransactionProposal("orgb", (Write("user:orga.alice", WriteMode.DELETE),), 1.0, 999,
                            reads=(dataclasses.replace(_read_of(state, "user:orga.alice")),))
    msg_ends = [Endorsement(org, crypto.sign(peer.signing_key, p.proposal_id + p.rwset_digest))
                for org, peer in net2.peers.items()]
    net2.submit(p, msg_ends)
    net2.pump(force=True)
    assert net2.ledger.tx_location(p.proposal_id).status is TxStatus.OWNERSHIP_VIOLATION
    assert net2.ledger.query_state("user:orga.alice") is not None


def _read_of(state, key):
    from gbpchain.ledger.tx import Read
    return Read(key, state.version(key))


# queries ------------------------------------------------------------------------

def test_scenario_access(scenario):
    ledger = scenario.ledger
    assert ledger.height == 4
    policy = ledger.query_policy("orgb.dbaccess", "orgb.internaldb")
    assert policy.key == "policy:orgb.dbaccess|orgb.internaldb"
    assert policy.body.action == "allow"
    assert ledger.resolve_access("orga.alice", "orgb.internaldb") is Action.ALLOW
    assert ledger.access_decision("orga.alice", "orgb.internaldb")[1] == "Group"


def test_unknown_policy_absent(scenario):
    assert scenario.ledger.query_policy("x.unknown", "y.unknown") is None


def test_expired_policy_absent(net2, clock):
    run(net2, "orga", "gbp member-create alice")
    run(net2, "orgb", "gbp resource-create db --ip 10.2.0.1")
    run(net2, "orgb", "gbp policy-rule-create r --src:orga.alice --dst:db --timeout 1h")
    assert net2.ledger.query_policy("orga.alice", "orgb.db") is not None
    clock.advance(3601)
    assert net2.ledger.query_policy("orga.alice", "orgb.db") is None
    assert net2.ledger.resolve_access("orga.alice", "orgb.db") is Action.DENY
    assert net2.ledger.query_state("policy:orga.alice|orgb.db") is not None


def test_non_member_denied(scenario):
    run(scenario, "orga", "gbp member-create bob")
    assert scenario.ledger.resolve_access("orga.bob", "orgb.internaldb") is Action.DENY


def test_membership_timeout(net2, clock):
    run(net2, "orga", "gbp member-create alice")
    run(net2, "orgb", "gbp group-create dbaccess --add:orga.alice --timeout 1w")
    run(net2, "orgb", "gbp member-create internalDB")
    run(net2, "orgb", "gbp policy-rule-create r --src:dbaccess --dst:internalDB")
    assert net2.ledger.resolve_access("orga.alice", "orgb.internaldb") is Action.ALLOW
    clock.advance(7 * 86400)
    assert net2.ledger.resolve_access("orga.alice", "orgb.internaldb") is Action.DENY


def test_direct_deny_overrides_group(scenario):
    run(scenario, "orgb", "gbp policy-rule-create block --src:orga.alice --dst:internalDB --actions deny")
    assert scenario.ledger.access_decision("orga.alice", "orgb.internaldb") == (Action.DENY, "Denied")


def test_default_deny_empty_state(net4):
    ledger = net4.ledger
    for u, r in itertools.product(["org1.a", "org2.b", "nobody.x"], ["org3.db", "org4.r"]):
        assert ledger.resolve_access(u, r) is Action.DENY


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["orga", "orgb"]), st.sampled_from(["u1", "u2", "u3"]),
                          st.sampled_from(["r1", "r2"])), max_size=6))
def test_default_deny_property(grants):
    """Access is granted exactly for the pairs some policy names; every other pair is denied."""
    net = Network(org_keys("orga", "orgb"), clock=ManualClock(0.0))
    for org in ("orga", "orgb"):
        for u in ("u1", "u2", "u3"):
            run(net, org, f"gbp member-create {u}")
        for r in ("r1", "r2"):
            run(net, org, f"gbp resource-create {r} --ip 10.0.{len(org)}.{len(r)}")
    granted = set()
    for org, u, r in grants:
        if (org, u, r) not in granted:
            run(net, org, f"gbp policy-rule-create p{u}{r} --src:{u} --dst:{r}")
            granted.add((org, u, r))
    for org, u, r in itertools.product(("orga", "orgb"), ("u1", "u2", "u3"), ("r1", "r2")):
        for user_org in ("orga", "orgb"):
            expected = Action.ALLOW if user_org == org and (org, u, r) in granted else Action.DENY
            assert net.ledger.resolve_access(f"{user_org}.{u}", f"{org}.{r}") is expected


def test_policy_snapshot(scenario, clock):
    snap = scenario.ledger.export_policy_snapshot()
    assert snap == [("orgb.dbaccess", "orgb.internaldb", Action.ALLOW)]
    eids = scenario.ledger.export_eid_snapshot()
    alice = scenario.ledger.get_user_eid("orga.alice")
    db = scenario.ledger.get_user_eid("orgb.internaldb")
    assert eids == [(alice, db, None)]


# persistence --------------------------------------------------------------------

def test_replay_byte_identical(tmp_path, clock):
    log = tmp_path / "chain.log"
    net = Network(org_keys("orga", "orgb"), clock=clock, log_path=log)
    run(net, "orga", "gbp member-create alice --ip 10.1.0.5")
    run(net, "orgb", "gbp group-create g --add:orga.alice --timeout 1d")
    run(net, "orgb", "gbp resource-create db --ip 10.2.0.1")
    run(net, "orgb", "gbp policy-rule-create r --src:g --dst:db")
    run(net, "orga", "gbp member-create bob")
    run(net, "orga", "gbp member-delete bob")
    rebuilt = Ledger.from_log(log, attach=False)
    assert rebuilt.state_snapshot() == net.ledger.state_snapshot()
    assert rebuilt.tip_digest == net.ledger.tip_digest
    assert rebuilt.chain_size_bytes() == net.ledger.chain_size_bytes() == log.stat().st_size - 4 * len(rebuilt.blocks)


def test_reopen_and_continue(tmp_path, clock):
    log = tmp_path / "chain.log"
    keys = org_keys("orga", "orgb")
    net = Network(keys, clock=clock, log_path=log)
    run(net, "orga", "gbp member-create alice")
    again = Network.from_log(log, keys, clock=clock)
    assert run(again, "orga", "gbp member-create bob").valid
    final = Ledger.from_log(log, attach=False)
    assert final.query_state("user:orga.bob") is not None
    assert final.height == again.ledger.height


def test_ownership_safety_by_replay(scenario):
    """Every committed mutation was issued by the org that created the key."""
    creator = {}
    for block in scenario.ledger.blocks:
        for tx, status in zip(block.transactions, block.statuses or ()):
            if status is not TxStatus.VALID:
                continue
            for w in tx.proposal.writes:
                if w.mode is WriteMode.CREATE:
                    creator[w.key] = tx.proposal.issuer
                else:
                    assert creator[w.key] == tx.proposal.issuer


def test_chain_size_linear_small(clock):
    net = Network(org_keys("org01", "org02"), clock=clock)
    sizes = {}
    for i in range(400):
        net.transact(net.propose(parse_command(f"gbp member-create u{i:05d} --ip 10.0.0.1"), "org01"), wait=False)
        net.pump()
        if i + 1 in (200, 400):
            net.pump(force=True)
            sizes[i + 1] = net.ledger.chain_size_bytes()
    assert 1.9 < sizes[400] / sizes[200] < 2.05
