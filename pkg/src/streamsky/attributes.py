"""Bag-of-bits encoding of integer keys.

A key k is described by one attribute per bit position (``bit(i, 0)`` or
``bit(i, 1)``) plus a marker ``ge2exp(m)`` for every m in :data:`MARKERS`
with k >= 2**m. The universe therefore has 2*64 + 4 = 132 attributes.

Each attribute has a stable integer ``code``: ``2*i + value`` for bits,
``128 + j`` for the j-th marker. Codes drive serialization and the
compiled tree kernels.
"""

from functools import lru_cache

MARKERS = (4, 8, 16, 32)
KEY_BITS = 64
MARKER_BASE = 128


class Attribute:
    __slots__ = ("code",)

    def __init__(self, code):
        if not (0 <= code < MARKER_BASE + len(MARKERS)):
            raise ValueError(f"attribute code {code} outside the universe")
        self.code = code

    @classmethod
    def bit(cls, position, value):
        if not (0 <= position < KEY_BITS) or value not in (0, 1):
            raise ValueError(f"bad bit attribute ({position}, {value})")
        return _ATTRS[2 * position + value]

    @classmethod
    def ge2exp(cls, m):
        try:
            return _ATTRS[MARKER_BASE + MARKERS.index(m)]
        except ValueError:
            raise ValueError(f"no ge2exp marker for m={m}") from None

    @classmethod
    def from_code(cls, code):
        if not (0 <= code < len(_ATTRS)):
            raise ValueError(f"attribute code {code} outside the universe")
        return _ATTRS[code]

    @property
    def kind(self):
        return "bit" if self.code < MARKER_BASE else "ge2exp"

    @property
    def position(self):
        return self.code >> 1 if self.code < MARKER_BASE else None

    @property
    def value(self):
        return self.code & 1 if self.code < MARKER_BASE else None

    @property
    def m(self):
        return MARKERS[self.code - MARKER_BASE] if self.code >= MARKER_BASE else None

    def present_in(self, k, width=KEY_BITS):
        """Whether this attribute belongs to encode_attributes(k, width)."""
        if self.code < MARKER_BASE:
            pos = self.code >> 1
            return pos < width and ((k >> pos) & 1) == (self.code & 1)
        m = self.m
        return m < width and k >> m != 0

    def __eq__(self, other):
        return isinstance(other, Attribute) and other.code == self.code

    def __lt__(self, other):
        return self.code < other.code

    def __hash__(self):
        return self.code

    def __reduce__(self):
        return (Attribute.from_code, (self.code,))

    def __str__(self):
        if self.code < MARKER_BASE:
            return f"bit{self.code >> 1}={self.code & 1}"
        return f"ge2exp{self.m}"

    __repr__ = __str__


_ATTRS = [object.__new__(Attribute) for _ in range(MARKER_BASE + len(MARKERS))]
for _code, _a in enumerate(_ATTRS):
    _a.code = _code
del _code, _a

#: all 132 attributes in code order
UNIVERSE = tuple(_ATTRS)


def markers_for(width):
    return tuple(m for m in MARKERS if m < width)


def universe(width=KEY_BITS):
    """Attributes usable at the given key width (8 is the exhaustive-test width)."""
    return tuple(a for a in UNIVERSE if a.present_in(0, width) or a.present_in((1 << width) - 1, width))


@lru_cache(maxsize=4096)
def _encode(k, width):
    codes = [2 * i + ((k >> i) & 1) for i in range(width)]
    codes.extend(MARKER_BASE + j for j, m in enumerate(MARKERS) if m < width and k >> m)
    return tuple(codes)


def attribute_codes(k, width=KEY_BITS):
    """Sorted attribute codes of B_k."""
    _check_key(k, width)
    return _encode(k, width)


def encode_attributes(k, width=KEY_BITS):
    """The attribute set B_k: one polarity per bit plus satisfied markers."""
    _check_key(k, width)
    return frozenset(_ATTRS[c] for c in _encode(k, width))


def _check_key(k, width):
    if not isinstance(k, int) or k < 0 or k >> width:
        raise ValueError(f"key {k!r} not representable in {width} bits")
