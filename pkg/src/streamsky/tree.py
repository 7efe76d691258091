"""Threshold-gate access trees for integer comparisons.

Trees are built over bag-of-bits attributes so that a key k satisfies
``build_access_tree(theta, op)`` exactly when ``k op theta``. Nodes are
addressed by their path from the root: a tuple of 1-based child indices,
``()`` being the root. The same indices are the x-coordinates used when a
secret is shared down the tree.
"""

from dataclasses import dataclass
from functools import lru_cache

from . import kernels
from .attributes import KEY_BITS, Attribute, markers_for
from .errors import PolicyError

OPS = ("eq", "ge", "gt", "le", "lt")


@dataclass(frozen=True)
class Leaf:
    attr: Attribute

    def __str__(self):
        return str(self.attr)


@dataclass(frozen=True)
class Gate:
    threshold: int
    children: tuple

    def __post_init__(self):
        if not self.children or not (1 <= self.threshold <= len(self.children)):
            raise ValueError(f"bad gate: threshold {self.threshold} over {len(self.children)} children")

    @property
    def kind(self):
        if self.threshold == len(self.children):
            return "and"
        if self.threshold == 1:
            return "or"
        return "threshold"

    def __str__(self):
        if self.kind == "threshold":
            return f"{self.threshold}of(" + ", ".join(map(str, self.children)) + ")"
        sep = " & " if self.kind == "and" else " | "
        return "(" + sep.join(map(str, self.children)) + ")"


class AccessTree:
    """Immutable wrapper around a root node with cached derived views."""

    def __init__(self, root, width=KEY_BITS):
        self.root = root
        self.width = width
        self._flat = None
        self._leaves = None

    def __eq__(self, other):
        return isinstance(other, AccessTree) and self.root == other.root and self.width == other.width

    def __hash__(self):
        return hash((self.root, self.width))

    def __str__(self):
        return str(self.root)

    def __repr__(self):
        return f"AccessTree({self.root}, width={self.width})"

    def node(self, path):
        node = self.root
        for idx in path:
            node = node.children[idx - 1]
        return node

    def leaves(self):
        """``[(path, Leaf), ...]`` in left-to-right order."""
        if self._leaves is None:
            out = []
            _collect_leaves(self.root, (), out)
            self._leaves = tuple(out)
        return self._leaves

    def accepts(self, attrs):
        """Standard threshold-gate satisfaction against an attribute set."""
        return _accepts(self.root, attrs)

    @property
    def flat(self):
        if self._flat is None:
            self._flat = flatten(self.root)
        return self._flat

    def accepts_key(self, k):
        return bool(kernels.accepts_batch(self.flat, [k], self.width)[0])

    def accepts_keys(self, keys):
        """Batch acceptance over raw keys (attribute sets derived on the fly)."""
        return [bool(b) for b in kernels.accepts_batch(self.flat, keys, self.width)]


def _collect_leaves(node, path, out):
    if isinstance(node, Leaf):
        out.append((path, node))
        return
    for i, child in enumerate(node.children, 1):
        _collect_leaves(child, path + (i,), out)


def _accepts(node, attrs):
    if isinstance(node, Leaf):
        return node.attr in attrs
    got = 0
    for child in node.children:
        if _accepts(child, attrs):
            got += 1
            if got >= node.threshold:
                return True
    return False


def flatten(root):
    """Post-order arrays consumed by :func:`kernels.accepts_batch`."""
    kinds, args, firsts, counts, children = [], [], [], [], []

    def visit(node):
        if isinstance(node, Leaf):
            kinds.append(0)
            args.append(node.attr.code)
            firsts.append(0)
            counts.append(0)
            return len(kinds) - 1
        ids = [visit(c) for c in node.children]
        kinds.append(1)
        args.append(node.threshold)
        firsts.append(len(children))
        counts.append(len(ids))
        children.extend(ids)
        return len(kinds) - 1

    visit(root)
    return (tuple(kinds), tuple(args), tuple(firsts), tuple(counts), tuple(children))


# -- construction -----------------------------------------------------------

def _bit(i, v):
    return Leaf(Attribute.bit(i, v))


def _always(width):
    # every key carries exactly one polarity of bit 0
    return Gate(1, (_bit(0, 0), _bit(0, 1)))


def _ge_low_bits(theta, w):
    """Tree for k[w-1..0] >= theta[w-1..0], theta > 0, walking MSB to LSB.

    Trailing zero bits of theta impose nothing, so the recursion bottoms out
    at theta's lowest set bit.
    """
    j = (theta & -theta).bit_length() - 1
    node = _bit(j, 1)
    for i in range(j + 1, w):
        node = Gate(2 if (theta >> i) & 1 else 1, (_bit(i, 1), node))
    return node


def _le_low_bits(theta, w):
    """Tree for k[w-1..0] <= theta[w-1..0], or None when always true.

    Mirror of the >= recursion with polarity-0 attributes: a 0 bit of theta
    forces bit(i, 0) (AND), a 1 bit lets bit(i, 0) alone settle it (OR).
    """
    inv = ~theta & ((1 << w) - 1)
    if inv == 0:
        return None
    j = (inv & -inv).bit_length() - 1
    node = _bit(j, 0)
    for i in range(j + 1, w):
        node = Gate(1 if (theta >> i) & 1 else 2, (_bit(i, 0), node))
    return node


def _ge(theta, width):
    if theta == 0:
        return _always(width)
    w = theta.bit_length()
    markers = [m for m in markers_for(width) if (1 << m) > theta]
    top = min(markers) if markers else width
    children = [Leaf(Attribute.ge2exp(m)) for m in markers]
    # bits between theta's width and the first usable marker each imply k > theta
    children += [_bit(i, 1) for i in range(w, top)]
    children.append(_ge_low_bits(theta, w))
    return children[0] if len(children) == 1 else Gate(1, tuple(children))


def _le(theta, width):
    if theta >= (1 << width) - 1:
        return _always(width)
    w = theta.bit_length()
    children = [_bit(i, 0) for i in range(w, width)]
    low = _le_low_bits(theta, w)
    if low is not None:
        children.append(low)
    return children[0] if len(children) == 1 else Gate(len(children), tuple(children))


def build_access_tree(theta, op, width=KEY_BITS):
    """Access tree accepting exactly the keys k with ``k op theta``."""
    if op not in OPS:
        raise PolicyError(f"unknown comparison {op!r}")
    top = (1 << width) - 1
    if not isinstance(theta, int) or not (0 <= theta <= top):
        raise PolicyError(f"threshold {theta!r} not representable in {width} bits")
    if op == "eq":
        root = Gate(width, tuple(_bit(i, (theta >> i) & 1) for i in range(width)))
    elif op == "ge":
        root = _ge(theta, width)
    elif op == "gt":
        if theta >= top:
            raise PolicyError("k > 2**width - 1 is unsatisfiable")
        root = _ge(theta + 1, width)
    elif op == "le":
        root = _le(theta, width)
    else:
        if theta == 0:
            raise PolicyError("k < 0 is unsatisfiable")
        root = _le(theta - 1, width)
    return AccessTree(root, width)


# -- secret sharing -----------------------------------------------------------

@lru_cache(maxsize=8192)
def lagrange_coefficients(indices, order):
    """Lagrange basis values at 0 for the given x-coordinates, mod ``order``."""
    return tuple(kernels.lagrange_at_zero(list(indices), order))


def share_secret(tree, secret, rng, order):
    """Share ``secret`` down the tree; returns ``{path: q_x(0)}`` for every node.

    Each gate x with threshold d gets a random polynomial of degree d-1 whose
    constant term is x's own share; child i receives its value at i.
    """
    shares = {}

    def visit(node, path, value):
        shares[path] = value
        if isinstance(node, Leaf):
            return
        coeffs = [value] + [rng.randrange(order) for _ in range(node.threshold - 1)]
        for i, child in enumerate(node.children, 1):
            acc = 0
            for c in reversed(coeffs):
                acc = (acc * i + c) % order
            visit(child, path + (i,), acc)

    visit(tree.root, (), secret % order)
    return shares


def recombine(tree, leaf_value, combine):
    """Bottom-up recombination shared by share recovery and Transform.

    ``leaf_value(path, leaf)`` returns a value or None (unusable leaf);
    ``combine(values, indices)`` folds the chosen children of a gate.
    Children are tried left to right and evaluation stops as soon as the
    gate's threshold is met or can no longer be met, so the lowest-indexed
    satisfying children are always the ones combined. Returns None when the
    tree is not satisfied.
    """

    def visit(node, path):
        if isinstance(node, Leaf):
            return leaf_value(path, node)
        need = node.threshold
        n = len(node.children)
        values, indices = [], []
        for i, child in enumerate(node.children, 1):
            if len(values) + (n - i + 1) < need:
                return None
            v = visit(child, path + (i,))
            if v is not None:
                values.append(v)
                indices.append(i)
                if len(values) == need:
                    return combine(values, tuple(indices))
        return None

    return visit(tree.root, ())


def recover_secret(tree, leaf_shares, attrs, order):
    """Rebuild the root secret from leaf shares whose attribute is in ``attrs``."""

    def leaf_value(path, leaf):
        return leaf_shares[path] if leaf.attr in attrs else None

    def combine(values, indices):
        coeffs = lagrange_coefficients(indices, order)
        return kernels.dot_mod(values, coeffs, order)

    return recombine(tree, leaf_value, combine)
