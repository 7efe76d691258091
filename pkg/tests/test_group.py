import pytest
from hypothesis import given, settings, strategies as st

from streamsky import group
from streamsky.errors import BackendUnavailable, ContextMismatch, DeserializationError

P = group.DEFAULT_ORDER
scalars = st.integers(min_value=0, max_value=P - 1)


def test_pairing_examples(ctx):
    g = ctx.g_pow(1)
    assert ctx.pair(g, g) == ctx.gt
    assert ctx.pair(ctx.g_pow(2), ctx.g_pow(3)) == ctx.gt_pow(6)
    assert ctx.g_pow(0) == ctx.identity_g
    assert ctx.order == P


@given(a=scalars, b=scalars)
def test_bilinearity(ctx, a, b):
    assert ctx.pair(ctx.g_pow(a), ctx.g_pow(b)) == ctx.gt_pow(a * b % P)
    assert ctx.pair(ctx.g_pow(a), ctx.g_pow(b)) == ctx.pair(ctx.g_pow(1), ctx.g_pow(1)) ** (a * b)


@given(a=scalars, b=scalars)
def test_group_law(ctx, a, b):
    x, y = ctx.gt_pow(a), ctx.gt_pow(b)
    assert x * y == ctx.gt_pow((a + b) % P)
    assert x / y == ctx.gt_pow((a - b) % P)
    assert x * ~x == ctx.identity_gt


def test_serialization_round_trip(ctx, rng):
    for _ in range(1000):
        s = ctx.random_scalar(rng)
        for elem, load in ((ctx.g_pow(s), ctx.deserialize_g), (ctx.gt_pow(s), ctx.deserialize_gt)):
            data = ctx.serialize(elem)
            assert len(data) == ctx.element_size
            assert load(data) == elem


def test_deserialize_rejects_garbage(ctx):
    with pytest.raises(DeserializationError):
        ctx.deserialize_g(b"\x00" * 7)
    with pytest.raises(DeserializationError):
        ctx.deserialize_gt((P).to_bytes(8, "big"))


def test_contexts_do_not_mix(ctx):
    other = group.setup("transparent", seed=b"other")
    with pytest.raises(ContextMismatch):
        ctx.gt * other.gt
    with pytest.raises(ContextMismatch):
        ctx.pair(ctx.g_pow(1), other.g_pow(1))


def test_same_seed_same_context():
    a = group.setup("transparent", seed=b"x")
    b = group.setup("transparent", seed=b"x")
    assert a == b and a.gt == b.gt
    assert a.rng("l").random() == b.rng("l").random()
    assert a.rng("l").random() != a.rng("m").random()


def test_external_backend_unavailable():
    with pytest.raises(BackendUnavailable, match="backend unavailable"):
        group.setup("external", seed=b"x")


def test_registered_backend():
    calls = []

    def factory(seed, **options):
        calls.append((seed, options))
        return group.TransparentGroup(seed)

    group.register_backend("mock", factory)
    try:
        c = group.setup("mock", seed=b"s", flavour=1)
        assert calls == [(b"s", {"flavour": 1})]
        assert c.pair(c.g_pow(2), c.g_pow(5)) == c.gt_pow(10)
    finally:
        group.unregister_backend("mock")
    with pytest.raises(BackendUnavailable):
        group.setup("mock", seed=b"s")
    with pytest.raises(ValueError):
        group.register_backend("transparent", factory)
