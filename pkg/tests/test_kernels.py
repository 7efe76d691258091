"""The compiled kernels must agree with the Python fallback bit for bit."""

import random

import pytest
from hypothesis import given, strategies as st

from streamsky import _pykernels as py
from streamsky import kernels
from streamsky.tree import build_access_tree

P = 2**64 - 59
native = kernels.native
needs_native = pytest.mark.skipif(native is None, reason="compiled kernels not built")

residues = st.integers(min_value=0, max_value=P - 1)


def test_dispatch_reports_backend():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (native is not None)


@needs_native
@given(st.lists(residues, max_size=50), residues)
def test_scale_and_sum(values, s):
    assert list(native.scale_mod(values, s, P)) == py.scale_mod(values, s, P)
    assert native.sum_mod(values, P) == py.sum_mod(values, P)
    assert native.dot_mod(values, values[::-1], P) == py.dot_mod(values, values[::-1], P)


@needs_native
@given(residues.filter(bool))
def test_invmod(a):
    assert native.invmod(a, P) == py.invmod(a, P)
    assert a * native.invmod(a, P) % P == 1


@needs_native
@given(st.sets(st.integers(min_value=1, max_value=200), min_size=1, max_size=64))
def test_lagrange(indices):
    idx = sorted(indices)
    assert list(native.lagrange_at_zero(idx, P)) == py.lagrange_at_zero(idx, P)


@needs_native
@given(st.integers(1, 40), st.integers(0, 2**64 - 100), st.integers(0, 30), st.randoms())
def test_window_blinds(beta, start, count, r):
    R = [r.randrange(1, P) for _ in range(beta)]
    assert list(native.window_blinds(R, beta, start, count, P)) == py.window_blinds(R, beta, start, count, P)


@needs_native
@pytest.mark.parametrize("op", ["eq", "ge", "gt", "le", "lt"])
def test_accepts_batch(op):
    rng = random.Random(op)
    for _ in range(40):
        theta = rng.choice([rng.getrandbits(64), rng.getrandbits(rng.randint(1, 40))])
        theta = max(1, min(theta, 2**64 - 2))
        tree = build_access_tree(theta, op)
        keys = [rng.getrandbits(64) for _ in range(50)] + [theta - 1, theta, theta + 1]
        assert list(native.accepts_batch(tree.flat, keys, 64)) == list(py.accepts_batch(tree.flat, keys, 64))


def test_large_modulus_uses_python():
    big = 2**127 - 1
    assert kernels.scale_mod([big - 1], 2, big) == [(big - 1) * 2 % big]
    assert kernels.lagrange_at_zero([1, 2], big) == py.lagrange_at_zero([1, 2], big)
