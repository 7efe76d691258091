"""Kernel dispatch: compiled kernels when importable, pure Python otherwise.

Set ``STREAMSKY_PURE_PYTHON=1`` to force the fallback. The compiled
kernels only handle moduli below 2**64, so every entry point here checks
the modulus and routes larger ones to the Python implementation.
"""

import os

from . import _pykernels as python

native = None
if os.environ.get("STREAMSKY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as native  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on build
        native = None

BACKEND = native.BACKEND if native is not None else python.BACKEND

_U64 = 1 << 64


def _impl(p):
    if native is not None and p < _U64:
        return native
    return python


def mulmod(a, b, p):
    return a * b % p


def invmod(a, p):
    return _impl(p).invmod(a, p)


def scale_mod(values, s, p):
    return _impl(p).scale_mod(values, s, p)


def sum_mod(values, p):
    return _impl(p).sum_mod(values, p)


def dot_mod(a, b, p):
    return _impl(p).dot_mod(a, b, p)


def lagrange_at_zero(indices, p):
    return _impl(p).lagrange_at_zero(indices, p)


def window_blinds(r, beta, start, count, p):
    return _impl(p).window_blinds(r, beta, start, count, p)


def accepts_batch(flat, keys, width):
    if native is not None and width <= 64:
        return native.accepts_batch(flat, keys, width)
    return python.accepts_batch(flat, keys, width)
