import socket

import pytest

from conftest import org_keys, run
from gbpchain import crypto
from gbpchain.clock import ManualClock
from gbpchain.control import (AssociationExpired, DecryptFailure, InProcessTransport, MapServer, Router, UserAgent,
                              confirmation_token, decode_message, encode_message, establish_association, parse_eid,
                              serve_udp)
from gbpchain.control.mapserver import AssociationError, AssociationUnknown
from gbpchain.control.wire import MapRequest
from gbpchain.ledger.api import LedgerClient, LedgerServer
from gbpchain.ledger.network import Network

ALICE_IP, BOB_IP, DB_IP = "10.1.0.5", "10.1.0.6", "10.2.0.9"
DB = parse_eid(DB_IP)


@pytest.fixture
def world(clock):
    net = Network(org_keys("orga", "orgb"), clock=clock)
    alice = UserAgent("orga.alice", crypto.new_signing_key(crypto.seed_for("alice")), parse_eid(ALICE_IP))
    bob = UserAgent("orga.bob", crypto.new_signing_key(crypto.seed_for("bob")), parse_eid(BOB_IP))
    run(net, "orga", f"gbp member-create alice --ip {ALICE_IP} --pubkey {alice.public_key_hex}")
    run(net, "orga", f"gbp member-create bob --ip {BOB_IP} --pubkey {bob.public_key_hex}")
    run(net, "orgb", "gbp group-create dbaccess --add:orga.alice --timeout 1h")
    run(net, "orgb", f"gbp resource-create internalDB --ip {DB_IP}")
    run(net, "orgb", "gbp policy-rule-create r --src:dbaccess --dst:internalDB")
    return net, alice, bob


@pytest.fixture(params=["trie", "ledger"])
def server(request, world, clock):
    net = world[0]
    ms = MapServer(net.ledger, Router("orgb", clock=clock), mode=request.param, clock=clock,
                   transport=InProcessTransport())
    ms.sync()
    return ms


def test_allowed_request_gets_association(server, world, clock):
    _, alice, _ = world
    reply = server.handle_map_request(alice.map_request(DB, nonce=1))
    sa = alice.accept_reply(reply)
    assert len(sa.shared_secret) == 32
    assert server.router.confirm(1, confirmation_token(sa, 1)) == sa
    assert server.events.codes() == ["Verified", "Replied"]


def test_non_member_silence(server, world):
    _, _, bob = world
    assert server.handle_map_request(bob.map_request(DB, nonce=2)) is None
    assert server.events.codes()[-1] == "NoPolicy"


def test_unknown_user_silence(server):
    stranger = UserAgent("orgz.eve", crypto.new_signing_key(), parse_eid("10.9.9.9"))
    assert server.handle_map_request(stranger.map_request(DB, nonce=3)) is None
    assert server.events.codes() == ["UnknownUser"]


def test_bad_signature_silence(server, world):
    _, alice, _ = world
    req = alice.map_request(DB, nonce=4)
    forged = MapRequest(req.nonce, req.source_eid, req.dest_eid, req.user_ref, bytes(64))
    assert server.handle_map_request(forged) is None
    assert server.events.codes() == ["BadSignature"]


def test_replay_silence(server, world):
    _, alice, _ = world
    req = alice.map_request(DB, nonce=5)
    assert server.handle_map_request(req) is not None
    assert server.handle_map_request(req) is None
    assert server.events.codes()[-1] == "Replay"


def test_replay_window_slides(server, world, clock):
    _, alice, _ = world
    req = alice.map_request(DB, nonce=6)
    server.handle_map_request(req)
    clock.advance(61)
    assert server.handle_map_request(req) is not None


def test_source_mismatch(server, world):
    _, alice, _ = world
    alice.eid = parse_eid("10.1.0.99")
    assert server.handle_map_request(alice.map_request(DB, nonce=7)) is None
    assert server.events.codes()[-1] == "SourceMismatch"


def test_expired_membership(server, world, clock):
    _, alice, _ = world
    clock.advance(3601)
    assert server.handle_map_request(alice.map_request(DB, nonce=8)) is None
    assert server.events.codes()[-1] == "Expired"


def test_malformed_datagram(server):
    assert server.handle_datagram(b"\x01\x07garbage") is None
    assert server.events.codes() == ["Malformed"]


def test_datagram_reply_sent(server, world):
    _, alice, _ = world
    data = server.handle_datagram(encode_message(alice.map_request(DB, nonce=9)), addr=("x", 1))
    assert server.transport.sent == [(data, ("x", 1))]
    assert decode_message(data).nonce == 9


def test_wrong_key_cannot_open(server, world):
    _, alice, bob = world
    reply = server.handle_map_request(alice.map_request(DB, nonce=10))
    with pytest.raises(DecryptFailure):
        establish_association(reply, bob.signing_key)


def test_association_expires(server, world, clock):
    _, alice, _ = world
    sa = alice.accept_reply(server.handle_map_request(alice.map_request(DB, nonce=11)))
    clock.advance(sa.lifetime + 1)
    with pytest.raises(AssociationExpired):
        server.router.confirm(11, confirmation_token(sa, 11))


def test_bad_confirmation_token(server, world):
    _, alice, _ = world
    server.handle_map_request(alice.map_request(DB, nonce=12))
    with pytest.raises(AssociationError):
        server.router.confirm(12, bytes(32))
    with pytest.raises(AssociationUnknown):
        server.router.confirm(999, bytes(32))


def test_unsolicited_reply_rejected(server, world):
    _, alice, bob = world
    reply = server.handle_map_request(alice.map_request(DB, nonce=13))
    with pytest.raises(AssociationUnknown):
        bob.accept_reply(reply)


def test_revocation_after_sync(world, clock):
    net, alice, _ = world
    ms = MapServer(net.ledger, Router(clock=clock), clock=clock)
    ms.sync()
    assert ms.handle_map_request(alice.map_request(DB, nonce=20)) is not None
    run(net, "orgb", "gbp policy-rule-delete r")
    result = ms.sync()
    assert (result.removed, result.size) == (1, 0)
    assert ms.handle_map_request(alice.map_request(DB, nonce=21)) is None


def test_trie_and_ledger_modes_agree(world, clock):
    net, alice, bob = world
    modes = {m: MapServer(net.ledger, Router(clock=clock), mode=m, clock=clock) for m in ("trie", "ledger")}
    for ms in modes.values():
        ms.sync()
    for t in (0, 1800, 3599, 3601):
        clock.set(t)
        for agent in (alice, bob):
            verdicts = {m: ms.authorize(agent.user_ref, agent.eid, DB, clock.now()) for m, ms in modes.items()}
            assert verdicts["trie"] == verdicts["ledger"]


def test_over_udp_and_socket_api(world, clock):
    net, alice, _ = world
    api = LedgerServer(net.ledger)
    api.start()
    client = LedgerClient(api.endpoint)
    try:
        ms = MapServer(client, Router(clock=clock), clock=clock)
        ms.sync()
        transport, thread, stop = serve_udp(ms, port=0)
        try:
            with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
                s.settimeout(5)
                s.sendto(encode_message(alice.map_request(DB, nonce=30)), transport.address)
                data, _ = s.recvfrom(65535)
            assert alice.accept_reply(decode_message(data)).lifetime == 3600
        finally:
            stop.set()
            transport.close()
            thread.join(2)
    finally:
        client.close()
        api.shutdown()
        api.server_close()


def test_ledger_mode_over_socket_api(world, clock):
    net, alice, bob = world
    api = LedgerServer(net.ledger)
    api.start()
    client = LedgerClient(api.endpoint)
    try:
        ms = MapServer(client, Router(clock=clock), mode="ledger", clock=clock)
        assert ms.handle_map_request(alice.map_request(DB, nonce=40)) is not None
        assert ms.handle_map_request(bob.map_request(DB, nonce=41)) is None
    finally:
        client.close()
        api.shutdown()
        api.server_close()


def test_invalid_mode(world):
    with pytest.raises(ValueError):
        MapServer(world[0].ledger, Router(), mode="cache")
