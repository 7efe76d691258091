import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from streamsky.attributes import UNIVERSE, Attribute, attribute_codes, encode_attributes, universe
from streamsky.errors import PolicyError
from streamsky.policies import _compare
from streamsky.tree import (
    OPS, Gate, Leaf, build_access_tree, lagrange_coefficients, recover_secret, share_secret,
)

P = 2**64 - 59
u64 = st.integers(min_value=0, max_value=2**64 - 1)


def bit(i, v):
    return Leaf(Attribute.bit(i, v))


def marker(m):
    return Leaf(Attribute.ge2exp(m))


def test_universe_size():
    assert len(UNIVERSE) == 132
    assert len({a.code for a in UNIVERSE}) == 132
    assert len(universe(8)) == 2 * 8 + 1  # bits plus the 2**4 marker


def test_encoding_examples():
    b3 = encode_attributes(3)
    assert Attribute.bit(0, 1) in b3 and Attribute.bit(1, 1) in b3
    assert all(Attribute.bit(i, 0) in b3 for i in range(2, 64))
    assert not any(a.kind == "ge2exp" for a in b3)
    assert len(b3) == 64

    b0 = encode_attributes(0)
    assert b0 == frozenset(Attribute.bit(i, 0) for i in range(64))

    b32 = encode_attributes(2**32)
    assert {a.m for a in b32 if a.kind == "ge2exp"} == {4, 8, 16, 32}
    assert Attribute.bit(32, 1) in b32


@given(u64)
def test_encoding_shape(k):
    attrs = encode_attributes(k)
    bits = [a for a in attrs if a.kind == "bit"]
    assert len(bits) == 64
    assert sum(a.value << a.position for a in bits) == k
    assert {a.m for a in attrs if a.kind == "ge2exp"} == {m for m in (4, 8, 16, 32) if k >= 2**m}
    assert list(attribute_codes(k)) == sorted(a.code for a in attrs)


def test_encoding_rejects_out_of_range():
    for bad in (-1, 2**64, 1.5):
        with pytest.raises(ValueError):
            encode_attributes(bad)


def test_ge_11_shape():
    tree = build_access_tree(11, "ge")
    low = Gate(2, (bit(3, 1), Gate(1, (bit(2, 1), Gate(2, (bit(1, 1), bit(0, 1)))))))
    expected = Gate(1, (marker(4), marker(8), marker(16), marker(32), low))
    assert tree.root == expected


def test_eq_is_64_leaf_and():
    theta = 0xDEADBEEF
    root = build_access_tree(theta, "eq").root
    assert isinstance(root, Gate) and root.kind == "and"
    assert root.threshold == 64 and len(root.children) == 64
    assert [c.attr for c in root.children] == [Attribute.bit(i, (theta >> i) & 1) for i in range(64)]


def test_unsatisfiable_trees_rejected():
    with pytest.raises(PolicyError):
        build_access_tree(2**64 - 1, "gt")
    with pytest.raises(PolicyError):
        build_access_tree(0, "lt")
    with pytest.raises(PolicyError):
        build_access_tree(0, "ne")
    with pytest.raises(PolicyError):
        build_access_tree(2**64, "ge")


def test_exhaustive_8bit():
    keys = list(range(256))
    for op in OPS:
        for theta in range(256):
            expected = [_compare(k, op, theta) for k in keys]
            try:
                tree = build_access_tree(theta, op, width=8)
            except PolicyError:
                assert not any(expected)
                continue
            assert tree.accepts_keys(keys) == expected, (op, theta)


@pytest.mark.parametrize("op", OPS)
def test_attribute_and_kernel_agree(op):
    rng = random.Random(op)
    for _ in range(30):
        theta = rng.randrange(1, 2**64 - 1)
        tree = build_access_tree(theta, op)
        for k in (theta - 1, theta, theta + 1, rng.getrandbits(64), rng.getrandbits(20)):
            assert tree.accepts(encode_attributes(k)) == tree.accepts_key(k) == _compare(k, op, theta)


@given(u64, u64, st.sampled_from(OPS))
def test_tree_semantics_64bit(theta, k, op):
    try:
        tree = build_access_tree(theta, op)
    except PolicyError:
        return
    assert tree.accepts(encode_attributes(k)) == _compare(k, op, theta)


def _lagrange_oracle(indices):
    out = []
    for i in indices:
        c = Fraction(1)
        for j in indices:
            if j != i:
                c *= Fraction(-j, i - j)
        out.append(c.numerator * pow(c.denominator, -1, P) % P)
    return out


@given(st.sets(st.integers(1, 70), min_size=1, max_size=12))
def test_lagrange_matches_rational_oracle(indices):
    idx = tuple(sorted(indices))
    assert list(lagrange_coefficients(idx, P)) == _lagrange_oracle(idx)


def test_lagrange_examples():
    # q(x) = 5 + 3x: q(1) = 8, q(2) = 11
    c = lagrange_coefficients((1, 2), P)
    assert (c[0] * 8 + c[1] * 11) % P == 5
    assert list(c) == [2, P - 1]


@given(u64, u64, st.sampled_from(OPS), st.integers(0, P - 1), st.randoms())
def test_share_and_recover(theta, k, op, secret, r):
    try:
        tree = build_access_tree(theta, op)
    except PolicyError:
        return
    shares = share_secret(tree, secret, r, P)
    assert shares[()] == secret
    leaf_shares = {path: shares[path] for path, _ in tree.leaves()}
    got = recover_secret(tree, leaf_shares, encode_attributes(k), P)
    if _compare(k, op, theta):
        assert got == secret
    else:
        assert got is None


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate(0, (bit(0, 1),))
    with pytest.raises(ValueError):
        Gate(3, (bit(0, 1), bit(1, 1)))
