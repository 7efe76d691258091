import random

import pytest
from hypothesis import given, settings, strategies as st

from streamsky import abe, serialize
from streamsky.errors import DeserializationError
from streamsky.policies import TriggerPolicy, WindowPolicy


@pytest.fixture(scope="module")
def objects(ctx, owner_keys):
    mk, pk, ws = owner_keys
    rng = random.Random(3)
    tk_w, uk_w = abe.user_keygen(ctx, mk, WindowPolicy(9, 5), rng, ws)
    tk_t, uk_t = abe.user_keygen(ctx, mk, TriggerPolicy(2**40, "le"), rng, ws)
    rec = abe.encrypt(ctx, pk, ws, 2**35 + 9, 17, rng)
    return [pk, mk, ws[5], ws[12], tk_w, uk_w, tk_t, uk_t, rec, abe.transform(tk_w, rec)]


def test_round_trip(ctx, owner_keys, objects):
    sizes = tuple(sorted(owner_keys[2]))
    for obj in objects:
        data = serialize.dumps(obj)
        back = serialize.loads(data, ctx, sizes)
        assert back == obj, type(obj).__name__
        assert serialize.dumps(back) == data
        assert serialize.from_text(serialize.to_text(obj), ctx, sizes) == obj


def test_every_truncation_rejected(ctx, owner_keys, objects):
    sizes = tuple(sorted(owner_keys[2]))
    for obj in objects:
        data = serialize.dumps(obj)
        for n in range(len(data)):
            with pytest.raises(DeserializationError):
                serialize.loads(data[:n], ctx, sizes)
        with pytest.raises(DeserializationError):
            serialize.loads(data + b"\x00", ctx, sizes)


def test_header_checks(ctx, objects):
    data = serialize.dumps(objects[0])
    with pytest.raises(DeserializationError, match="version"):
        serialize.loads(data[:1] + b"\x02" + data[2:], ctx)
    with pytest.raises(DeserializationError, match="type"):
        serialize.loads(b"\x7f" + data[1:], ctx)
    with pytest.raises(DeserializationError):
        serialize.from_text("not base64!", ctx)


def test_ciphertext_needs_window_sizes(ctx, owner_keys, objects):
    rec = objects[8]
    data = serialize.dumps(rec)
    with pytest.raises(DeserializationError):
        serialize.loads(data, ctx, (1, 2))


@settings(max_examples=300)
@given(st.binary(max_size=200))
def test_fuzz_never_crashes(ctx, data):
    try:
        serialize.loads(data, ctx, (1, 2, 5, 12))
    except DeserializationError:
        pass


@settings(max_examples=200)
@given(st.data())
def test_bitflip_fuzz(ctx, owner_keys, objects, data):
    obj = data.draw(st.sampled_from(objects))
    raw = bytearray(serialize.dumps(obj))
    pos = data.draw(st.integers(0, len(raw) - 1))
    raw[pos] ^= data.draw(st.integers(1, 255))
    try:
        serialize.loads(bytes(raw), ctx, tuple(sorted(owner_keys[2])))
    except DeserializationError:
        pass
