import random

import pytest

from streamsky import abe, xacml
from streamsky.errors import ConfigError, PolicyError, ProtocolError
from streamsky.policies import TriggerPolicy, WindowPolicy
from streamsky.roles import (
    AuthorizationFailure, CloudService, OwnerSession, TriggerValue, UserClient, WindowAccumulator, WindowValue,
)
from streamsky.simulation import compare_with_oracle, load_scenario, plaintext_oracle, run_simulation
from streamsky.wire import Error, Grant, KeyMaterial, TriggerDelivery, UploadPolicy, WindowDelivery

P = 2**64 - 59


@pytest.fixture
def owner(ctx):
    return OwnerSession(ctx, "s1", window_sizes=(5, 12), rng=random.Random(1))


def _connect(ctx, owner, grants):
    """Cloud with the stream registered and the given (user, policy) grants active."""
    cloud = CloudService(ctx)
    cloud.handle(owner.register_message())
    users = {}
    for uid, policy in grants:
        to_cloud, km = owner.negotiate(uid, policy)
        for m in to_cloud:
            cloud.handle(m)
        user = users.setdefault(uid, UserClient(ctx, uid))
        cloud.handle(user.add_key(km))
    return cloud, users


def test_negotiate_window(ctx, owner):
    to_cloud, km = owner.negotiate("alice", WindowPolicy(9, 5))
    assert [type(m) for m in to_cloud] == [UploadPolicy, Grant]
    assert isinstance(km, KeyMaterial) and km.policy_id == "s1/window:9,5"
    assert km.user_key.sigma == abe.sigma(owner.window_secrets[5], 9, P)
    p = xacml.parse_policy(to_cloud[0].policy_xml)
    assert (p.stream, p.threshold, p.window_size) == ("s1", 9, 5)
    # second user: same policy id, no second upload, distinct z, same sigma
    to_cloud2, km2 = owner.negotiate("bob", WindowPolicy(9, 5))
    assert [type(m) for m in to_cloud2] == [Grant]
    assert km2.user_key.z != km.user_key.z and km2.user_key.sigma == km.user_key.sigma


def test_negotiate_errors(ctx, owner):
    _, km = owner.negotiate("carol", TriggerPolicy(7, "eq"))
    assert km.user_key.sigma is None
    with pytest.raises(PolicyError):
        owner.negotiate("carol", WindowPolicy(0, 3))
    with pytest.raises(PolicyError):
        owner.negotiate("carol", TriggerPolicy(8, "eq"), policy_id="s1/eq:7")


def test_publish(ctx, owner):
    msg = owner.publish(3, 10)
    assert xacml.parse_request(msg.request_xml) == xacml.XacmlRequest("s1", 3)
    assert set(msg.record.window_bodies) == {5, 12}
    cloud = CloudService(ctx)
    cloud.handle(owner.register_message())
    assert cloud.handle(msg) == []  # nobody holds a grant yet


def test_ingest_window_examples(ctx, owner):
    cloud, users = _connect(ctx, owner, [("alice", WindowPolicy(9, 5))])
    assert cloud.handle(owner.publish(3, 1)) == []
    assert cloud.counter.transforms == 0 and cloud.denied == 1
    out = []
    for k in range(9, 14):
        out += cloud.handle(owner.publish(k, 10))
    assert len(out) == 1
    uid, msg = out[0]
    assert uid == "alice" and isinstance(msg, WindowDelivery) and msg.i == 0
    ev = users["alice"].receive(msg)
    assert ev == WindowValue("alice", "s1/window:9,5", 0, 50, 5) and ev.average == 10
    assert cloud.handle(owner.publish(8, 1)) == []


def test_ingest_trigger_and_error_paths(ctx, owner):
    cloud, users = _connect(ctx, owner, [("bob", TriggerPolicy(20, "ge"))])
    out = cloud.handle(owner.publish(25, 7))
    assert [(u, type(m)) for u, m in out] == [("bob", TriggerDelivery)]
    assert users["bob"].receive(out[0][1]) == TriggerValue("bob", "s1/ge:20", 25, 7)
    assert users["bob"].receive(Error(1, "x")) is None
    with pytest.raises(ProtocolError):
        cloud.handle(KeyMaterial("bob", "p", "s1", users["bob"].keys["s1/ge:20"]))
    bad = owner.publish(30, 1)
    with pytest.raises(ProtocolError):
        cloud.handle(type(bad)("s1", bad.record, xacml.emit_request("s1", 31)))
    with pytest.raises(ProtocolError):
        cloud.handle(type(bad)("s9", bad.record, bad.request_xml))


def test_subscribe_requires_grant(ctx, owner):
    cloud, users = _connect(ctx, owner, [])
    from streamsky.wire import Subscribe
    with pytest.raises(ProtocolError):
        cloud.handle(Subscribe("eve", "s1/ge:0"))


def test_mismatched_grant_rejected(ctx, owner):
    cloud, _ = _connect(ctx, owner, [("a", WindowPolicy(9, 5))])
    to_cloud, _ = owner.negotiate("b", WindowPolicy(0, 5))
    cloud.handle(to_cloud[0])
    forged = Grant("s1/window:9,5", "b", to_cloud[1].transform_key)
    with pytest.raises(ProtocolError):
        cloud.handle(forged)


def test_user_constant_stream_and_replay(ctx, owner):
    cloud, users = _connect(ctx, owner, [("u", WindowPolicy(0, 5))])
    events = []
    for k in range(20):
        for _, msg in cloud.handle(owner.publish(k, 4)):
            events.append(users["u"].receive(msg))
            replay = users["u"].receive(msg)
            assert replay == events[-1]
    assert [e.i for e in events] == [0, 1, 2, 3]
    assert all(e.average == 4 for e in events)


def test_wrong_index_is_authorization_failure(ctx, owner):
    cloud, users = _connect(ctx, owner, [("u", WindowPolicy(0, 5))])
    out = []
    for k in range(5):
        out += cloud.handle(owner.publish(k, 1))
    msg = out[0][1]
    ev = users["u"].receive(WindowDelivery(msg.policy_id, 1, msg.E1, msg.E2))
    assert isinstance(ev, AuthorizationFailure) and ev.index == 1


def test_accumulator_out_of_order():
    acc = WindowAccumulator(3, 4)
    assert acc.insert(1, {}) is None  # before alpha
    assert acc.insert(5, {"u": 5}) is None
    assert acc.insert(8, {"u": 8}) is None  # next window opens early
    assert acc.insert(3, {"u": 3}) is None
    assert acc.insert(4, {"u": 4}) is None
    i, entries = acc.insert(6, {"u": 6})
    assert i == 0 and [e["u"] for e in entries] == [3, 4, 5, 6]
    assert acc.buffered() == 1 and acc.stalled() == [1]


def test_accumulator_protocol_errors():
    acc = WindowAccumulator(0, 2)
    acc.insert(0, {})
    with pytest.raises(ProtocolError, match="duplicate"):
        acc.insert(0, {})
    acc.insert(1, {})
    with pytest.raises(ProtocolError):
        acc.insert(1, {})  # window 0 already emitted
    acc.insert(6, {})  # window 3
    with pytest.raises(ProtocolError):
        acc.insert(2, {})  # two windows behind the newest


def test_accumulator_stall_timeout():
    now = [0.0]
    acc = WindowAccumulator(0, 3, stall_timeout=5, clock=lambda: now[0])
    acc.insert(0, {})
    acc.insert(1, {})
    now[0] = 6.0
    assert acc.insert(3, {}) is None
    assert acc.dropped == [0]
    with pytest.raises(ProtocolError):
        acc.insert(2, {})  # never emitted, never resurrected
    assert acc.insert(4, {}) is None
    assert acc.insert(5, {})[0] == 1


SCENARIO = {
    "seed": "roles-test",
    "v_max": 1000,
    "streams": [{"id": "s1", "window_sizes": [5], "start": 0, "count": 60}],
    "policies": [
        {"id": "w", "stream": "s1", "policy": "window:9,5"},
        {"id": "t", "stream": "s1", "policy": "ge:40"},
    ],
    "users": [{"id": "alice", "policies": ["w"]}, {"id": "bob", "policies": ["t", "w"]}],
}


def test_simulation_matches_oracle_and_is_deterministic():
    a = run_simulation(SCENARIO)
    b = run_simulation(SCENARIO)
    assert compare_with_oracle(a) == ([], [])
    assert len(a.transcript.outputs) == len(plaintext_oracle(a.scenario)) == 2 * 10 + 20
    assert a.transcript.digest() == b.transcript.digest()
    other = run_simulation(dict(SCENARIO, seed="roles-test-2"))
    assert other.transcript.digest() != a.transcript.digest()


def test_simulation_big_window():
    sc = {
        "seed": "bw", "v_max": 1000,
        "streams": [{"id": "s", "window_sizes": [5], "start": 0, "count": 100, "values": {"kind": "constant", "value": 1000}}],
        "policies": [{"id": "p", "stream": "s", "policy": "window:0,5"}],
        "users": [{"id": "u", "policies": ["p"]}],
    }
    r = run_simulation(sc)
    assert compare_with_oracle(r) == ([], [])
    assert [e.total for e in r.transcript.outputs] == [5000] * 20


def test_simulation_many_users():
    rng = random.Random(2)
    pols = [{"id": f"p{j}", "stream": "s", "policy": p} for j, p in enumerate(
        ["window:0,2", "window:3,12", "window:9,5", "ge:500", "le:100", "eq:777", "gt:990", "lt:3",
         "window:1,1", "ge:0"])]
    users = [{"id": f"u{j}", "policies": sorted(rng.sample([p["id"] for p in pols], 3))} for j in range(10)]
    sc = {"seed": "many", "streams": [{"id": "s", "window_sizes": [1, 2, 5, 12], "start": 0, "count": 1000}],
          "policies": pols, "users": users}
    r = run_simulation(sc)
    assert compare_with_oracle(r) == ([], [])
    assert r.cloud.inconsistencies == 0


def test_simulation_tcp_matches_memory():
    mem = run_simulation(SCENARIO, transport="memory")
    tcp = run_simulation(SCENARIO, transport="tcp")
    assert compare_with_oracle(tcp) == ([], [])
    key = lambda e: (e.user_id, e.policy_id, getattr(e, "k", getattr(e, "i", None)))
    assert sorted(tcp.transcript.outputs, key=key) == sorted(mem.transcript.outputs, key=key)
    assert tcp.transcript.errors == []


@pytest.mark.parametrize("bad", [
    {},
    {"seed": ""},
    {"seed": "x", "transport": "pigeon"},
    {"seed": "x", "bogus": 1},
    {"seed": "x", "streams": [{"id": "s", "window_sizes": [0], "start": 0, "count": 1}]},
    "not json",
    "/nonexistent/scenario.json",
])
def test_bad_scenarios(bad):
    with pytest.raises(ConfigError):
        load_scenario(bad)
