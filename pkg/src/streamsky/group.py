"""Symmetric bilinear group abstraction.

Two backends sit behind one interface:

``transparent``
    An element *is* its discrete logarithm (an int mod p tagged with its
    group). Multiplication adds exponents, exponentiation multiplies them and
    the pairing multiplies the two exponents. Nothing is hidden, which is the
    point: every protocol equation can be checked with direct exponent
    arithmetic. Never use it to protect data.

``external``
    A slot for a production pairing library. Nothing ships in this package;
    install one with :func:`register_backend`.

Both backends expose :class:`GroupContext`'s methods and elements supporting
``*``, ``/``, ``**`` (int exponent) and ``~`` (inverse).
"""

import hashlib
import random

from . import kernels
from .errors import BackendUnavailable, ContextMismatch, DeserializationError

#: largest prime below 2**64
DEFAULT_ORDER = 2**64 - 59

_EXTERNAL = {}


def register_backend(name, factory):
    """Make ``setup(name, seed)`` return ``factory(seed, **options)``.

    The factory must return a :class:`GroupContext` subclass instance.
    ``"transparent"`` cannot be overridden.
    """
    if name == "transparent":
        raise ValueError("the transparent backend is built in")
    _EXTERNAL[name] = factory


def unregister_backend(name):
    _EXTERNAL.pop(name, None)


def setup(backend="transparent", seed=b"", **options):
    """Create a group context.

    For the transparent backend ``seed`` must be non-empty; contexts from the
    same seed are interchangeable and their :meth:`GroupContext.rng` streams
    are identical.
    """
    if isinstance(seed, str):
        seed = seed.encode()
    if backend == "transparent":
        if not seed:
            raise ValueError("transparent backend needs a non-empty seed")
        return TransparentGroup(seed, order=options.get("order", DEFAULT_ORDER))
    if backend in _EXTERNAL:
        return _EXTERNAL[backend](seed, **options)
    if backend == "external":
        raise BackendUnavailable("backend unavailable: no production pairing backend registered")
    raise BackendUnavailable(f"unknown backend {backend!r}")


class GroupContext:
    """Operations shared by every backend.

    Subclasses provide the generators ``g``/``gt``, identities, ``pair`` and
    (de)serialization. Contexts are immutable once built.
    """

    backend = None
    order = None
    element_size = None

    def random_scalar(self, rng, nonzero=False):
        lo = 1 if nonzero else 0
        return rng.randrange(lo, self.order)

    def rng(self, label=b""):
        """Independent deterministic RNG stream derived from the context seed."""
        if isinstance(label, str):
            label = label.encode()
        digest = hashlib.sha256(self.seed + b"/" + label).digest()
        return random.Random(int.from_bytes(digest, "big"))

    def g_pow(self, s):
        return self.g ** s

    def gt_pow(self, s):
        return self.gt ** s

    def pow_many(self, elems, s):
        """``[e ** s for e in elems]``; backends may batch it."""
        return [e ** s for e in elems]

    def pair(self, a, b):
        raise NotImplementedError

    def serialize(self, elem):
        raise NotImplementedError

    def deserialize_g(self, data):
        raise NotImplementedError

    def deserialize_gt(self, data):
        raise NotImplementedError


class _Elem:
    __slots__ = ("ctx", "x")

    def __init__(self, ctx, x):
        self.ctx = ctx
        self.x = x

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.ctx is not self.ctx and other.ctx.tag != self.ctx.tag:
            raise ContextMismatch("elements belong to different group contexts")

    def __mul__(self, other):
        self._check(other)
        return type(self)(self.ctx, (self.x + other.x) % self.ctx.order)

    def __truediv__(self, other):
        self._check(other)
        return type(self)(self.ctx, (self.x - other.x) % self.ctx.order)

    def __pow__(self, s):
        if not isinstance(s, int):
            return NotImplemented
        return type(self)(self.ctx, self.x * s % self.ctx.order)

    def __invert__(self):
        return type(self)(self.ctx, -self.x % self.ctx.order)

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and self.x == other.x
            and (other.ctx is self.ctx or other.ctx.tag == self.ctx.tag)
        )

    def __hash__(self):
        return hash((type(self).__name__, self.x))

    def __bytes__(self):
        return self.ctx.serialize(self)

    def __repr__(self):
        return f"{type(self).__name__}(dlog={self.x})"


class ElemG(_Elem):
    """Source-group element (transparent representation)."""

    __slots__ = ()


class ElemGT(_Elem):
    """Target-group element (transparent representation)."""

    __slots__ = ()


class TransparentGroup(GroupContext):
    backend = "transparent"

    def __init__(self, seed, order=DEFAULT_ORDER):
        if order < 3:
            raise ValueError("group order too small")
        self.seed = bytes(seed)
        self.order = order
        self.element_size = (order.bit_length() + 7) // 8
        self.tag = hashlib.sha256(b"transparent|%d|" % order + self.seed).digest()[:16]
        self.g = ElemG(self, 1)
        self.gt = ElemGT(self, 1)
        self.identity_g = ElemG(self, 0)
        self.identity_gt = ElemGT(self, 0)

    def __eq__(self, other):
        return isinstance(other, TransparentGroup) and other.tag == self.tag

    def __hash__(self):
        return hash(self.tag)

    def __repr__(self):
        return f"TransparentGroup(order={self.order}, seed={self.seed!r})"

    def g_pow(self, s):
        return ElemG(self, s % self.order)

    def gt_pow(self, s):
        return ElemGT(self, s % self.order)

    def pow_many(self, elems, s):
        for e in elems:
            if e.ctx is not self and e.ctx.tag != self.tag:
                raise ContextMismatch("elements belong to different group contexts")
        xs = kernels.scale_mod([e.x for e in elems], s % self.order, self.order)
        return [ElemG(self, x) if type(e) is ElemG else ElemGT(self, x) for e, x in zip(elems, xs)]

    def pair(self, a, b):
        if type(a) is not ElemG or type(b) is not ElemG:
            raise TypeError("pair() takes two source-group elements")
        for e in (a, b):
            if e.ctx is not self and e.ctx.tag != self.tag:
                raise ContextMismatch("elements belong to different group contexts")
        return ElemGT(self, a.x * b.x % self.order)

    def serialize(self, elem):
        if elem.ctx is not self and elem.ctx.tag != self.tag:
            raise ContextMismatch("element belongs to a different group context")
        return elem.x.to_bytes(self.element_size, "big")

    def _deserialize(self, cls, data):
        if not isinstance(data, (bytes, bytearray, memoryview)):
            raise DeserializationError("element bytes expected")
        if len(data) != self.element_size:
            raise DeserializationError(
                f"element must be {self.element_size} bytes, got {len(data)}"
            )
        x = int.from_bytes(data, "big")
        if x >= self.order:
            raise DeserializationError("element value out of range")
        return cls(self, x)

    def deserialize_g(self, data):
        return self._deserialize(ElemG, data)

    def deserialize_gt(self, data):
        return self._deserialize(ElemGT, data)
