"""Key-policy ABE with proxy transform and blinded window sums.

Roles of the functions below:

* owner: :func:`master_keygen`, :func:`make_window_secrets`,
  :func:`user_keygen`, :func:`encrypt`
* cloud: :func:`transform`, :func:`compute_sum`
* user: :func:`build_dlog_table`, :func:`decrypt_trigger`,
  :func:`decrypt_window`

All message-carrying bodies live in the target group with base
``g_T = e(g, g)``: a value v is carried as ``g_T ** v``. Plaintexts are
non-negative integers bounded by a configured ``v_max``; shift signed data
before encrypting it.
"""

from dataclasses import dataclass, field
from fractions import Fraction

from . import kernels
from .attributes import KEY_BITS, UNIVERSE, Attribute, attribute_codes
from .errors import (
    ContextMismatch,
    MessageRangeError,
    PolicyError,
    TableMiss,
    TableTooLarge,
    WindowError,
)
from .policies import TriggerPolicy, WindowPolicy
from .tree import lagrange_coefficients, recombine, share_secret

DEFAULT_V_MAX = 1000
DLOG_TABLE_CAP = 10**7

_ATTR = UNIVERSE


@dataclass(frozen=True)
class MasterKey:
    y: int
    t: dict  # Attribute -> int

    def __repr__(self):
        return "MasterKey(<secret>)"


@dataclass(frozen=True)
class PublicKey:
    Y: object  # ElemGT, g_T ** y
    T: dict  # Attribute -> ElemG, g ** t_i

    @property
    def ctx(self):
        return self.Y.ctx


@dataclass(frozen=True)
class WindowSecrets:
    """Per-stream blind values R[0..beta-1] for one window size."""

    beta: int
    R: tuple

    def __post_init__(self):
        if len(self.R) != self.beta:
            raise ValueError("need exactly beta blind values")

    def __repr__(self):
        return f"WindowSecrets(beta={self.beta}, <secret>)"


@dataclass(frozen=True)
class TransformKey:
    """Cloud half of a user's key: D_x = g ** (q_x(0) / (z_u * t_i)) per leaf."""

    policy: object
    tree: object
    D: dict  # leaf path -> ElemG

    @property
    def ctx(self):
        return next(iter(self.D.values())).ctx


@dataclass(frozen=True)
class UserKey:
    """User half: z_u, and sigma(alpha, beta) for window policies."""

    policy: object
    z: int
    sigma: int = None

    def __post_init__(self):
        if (self.sigma is not None) != isinstance(self.policy, WindowPolicy):
            raise ValueError("sigma must be present exactly for window policies")

    @property
    def alpha(self):
        return self.policy.alpha if isinstance(self.policy, WindowPolicy) else None

    @property
    def beta(self):
        return self.policy.beta if isinstance(self.policy, WindowPolicy) else None

    def __repr__(self):
        return f"UserKey(policy={self.policy}, <secret>)"


@dataclass(frozen=True)
class CiphertextRecord:
    """What the owner outsources for one tuple (k, v).

    ``Eprime`` maps each attribute of B_k to g ** (t_i * s_k). One body for
    trigger policies plus one per supported window size, all sharing s_k.
    """

    k: int
    Eprime: dict
    trigger_body: object
    window_bodies: dict = field(default_factory=dict)  # beta -> ElemGT
    width: int = KEY_BITS

    @property
    def attributes(self):
        return frozenset(self.Eprime)

    @property
    def ctx(self):
        return self.trigger_body.ctx


@dataclass(frozen=True)
class TransformedCiphertext:
    """C_k = (selected body, g_T ** (y * s_k / z_u))."""

    k: int
    body: object
    proof_part: object


@dataclass(frozen=True)
class WindowSum:
    """Exact window result: ``total / beta`` is the average."""

    total: int
    beta: int

    @property
    def average(self):
        return Fraction(self.total, self.beta)


class PairingCounter:
    """Tally of pairings and completed transforms; pass one to :func:`transform`."""

    def __init__(self):
        self.pairings = 0
        self.transforms = 0

    def reset(self):
        self.pairings = 0
        self.transforms = 0

    def __repr__(self):
        return f"PairingCounter(pairings={self.pairings}, transforms={self.transforms})"


# -- negotiation ---------------------------------------------------------------

def master_keygen(ctx, rng):
    """Master secret y and one t_i per universe attribute, all in [1, p)."""
    y = ctx.random_scalar(rng, nonzero=True)
    t = {a: ctx.random_scalar(rng, nonzero=True) for a in UNIVERSE}
    mk = MasterKey(y, t)
    pk = PublicKey(ctx.gt_pow(y), {a: ctx.g_pow(ti) for a, ti in t.items()})
    return mk, pk


def make_window_secrets(ctx, beta, rng):
    if beta < 1:
        raise PolicyError("window size must be positive")
    return WindowSecrets(beta, tuple(ctx.random_scalar(rng, nonzero=True) for _ in range(beta)))


def blind(ws, k, order):
    """2 ** ceil(k / beta) * R[k mod beta] mod p: the blind on key k's body."""
    return kernels.window_blinds(ws.R, ws.beta, k, 1, order)[0]


def sigma(ws, alpha, order):
    """Sum of the blinds of window [alpha, alpha + beta)."""
    return kernels.sum_mod(kernels.window_blinds(ws.R, ws.beta, alpha, ws.beta, order), order)


def user_keygen(ctx, mk, policy, rng, window_secrets=None, width=KEY_BITS):
    """Issue (TransformKey, UserKey) for one user and one policy.

    ``window_secrets`` maps beta to :class:`WindowSecrets`; required for
    window policies. A fresh z_u is drawn per call.
    """
    p = ctx.order
    if isinstance(policy, WindowPolicy):
        ws = (window_secrets or {}).get(policy.beta)
        if ws is None:
            raise PolicyError(f"no window secrets for window size {policy.beta}")
    elif not isinstance(policy, TriggerPolicy):
        raise PolicyError(f"unsupported policy {policy!r}")

    tree = policy.tree(width)
    z = ctx.random_scalar(rng, nonzero=True)
    shares = share_secret(tree, mk.y, rng, p)
    D = {}
    for path, leaf in tree.leaves():
        denom = z * mk.t[leaf.attr] % p
        D[path] = ctx.g_pow(shares[path] * kernels.invmod(denom, p) % p)
    sig = sigma(ws, policy.alpha, p) if isinstance(policy, WindowPolicy) else None
    return TransformKey(policy, tree, D), UserKey(policy, z, sig)


# -- outsourcing ---------------------------------------------------------------

def encrypt(ctx, pk, window_secrets, k, v, rng, v_max=DEFAULT_V_MAX, width=KEY_BITS):
    """Encrypt tuple (k, v) once for trigger use and once per window size."""
    if not isinstance(v, int) or not (0 <= v <= v_max):
        raise MessageRangeError(f"value {v!r} outside [0, {v_max}]")
    p = ctx.order
    s = ctx.random_scalar(rng, nonzero=True)
    attrs = [_ATTR[c] for c in attribute_codes(k, width)]
    Eprime = dict(zip(attrs, ctx.pow_many([pk.T[a] for a in attrs], s)))
    mask = pk.Y ** s
    trigger_body = ctx.gt_pow(v) * mask
    bodies = {}
    for beta in sorted(window_secrets):
        bodies[beta] = ctx.gt_pow((v + blind(window_secrets[beta], k, p)) % p) * mask
    return CiphertextRecord(k, Eprime, trigger_body, bodies, width)


# -- relaying ------------------------------------------------------------------

def transform(tk, c, counter=None):
    """Proxy-transform a record under a transform key.

    Returns a :class:`TransformedCiphertext`, or None when the key's tree is
    not satisfied by the record's attributes.
    """
    ctx = c.ctx
    tk_ctx = tk.ctx
    if tk_ctx is not ctx and tk_ctx.tag != ctx.tag:
        raise ContextMismatch("transform key and ciphertext come from different contexts")
    p = ctx.order
    D = tk.D
    Eprime = c.Eprime
    pair = ctx.pair

    def leaf_value(path, leaf):
        e = Eprime.get(leaf.attr)
        if e is None:
            return None
        if counter is not None:
            counter.pairings += 1
        return pair(D[path], e)

    def combine(values, indices):
        coeffs = lagrange_coefficients(indices, p)
        acc = values[0] ** coeffs[0]
        for val, co in zip(values[1:], coeffs[1:]):
            acc = acc * val ** co
        return acc

    proof = recombine(tk.tree, leaf_value, combine)
    if proof is None:
        return None
    if isinstance(tk.policy, WindowPolicy):
        body = c.window_bodies.get(tk.policy.beta)
        if body is None:
            raise PolicyError(f"ciphertext {c.k} has no body for window size {tk.policy.beta}")
    else:
        body = c.trigger_body
    if counter is not None:
        counter.transforms += 1
    return TransformedCiphertext(c.k, body, proof)


def compute_sum(window, alpha, beta):
    """Multiply the bodies and proof parts of one complete aligned window."""
    if len(window) != beta:
        raise WindowError(f"window needs {beta} ciphertexts, got {len(window)}")
    k0 = window[0].k
    if k0 < alpha or (k0 - alpha) % beta:
        raise WindowError(f"window start {k0} not aligned to alpha={alpha}, beta={beta}")
    for j, t in enumerate(window):
        if t.k != k0 + j:
            raise WindowError(f"keys not consecutive at position {j}: {t.k}")
    E1 = window[0].body
    E2 = window[0].proof_part
    for t in window[1:]:
        E1 = E1 * t.body
        E2 = E2 * t.proof_part
    return E1, E2


# -- user side -----------------------------------------------------------------

class DlogTable:
    """Precomputed g_T ** m -> m for m in [0, M]."""

    def __init__(self, ctx, M, entries):
        self.ctx = ctx
        self.M = M
        self._entries = entries

    def __len__(self):
        return len(self._entries)

    def __contains__(self, elem):
        return elem in self._entries

    def lookup(self, elem):
        try:
            return self._entries[elem]
        except KeyError:
            raise TableMiss(f"discrete log outside [0, {self.M}]") from None


def build_dlog_table(ctx, M, cap=DLOG_TABLE_CAP):
    if M < 0:
        raise ValueError("table bound must be non-negative")
    if M > cap:
        raise TableTooLarge(f"table bound {M} exceeds cap {cap}")
    entries = {}
    cur = ctx.identity_gt
    g = ctx.gt
    for m in range(M + 1):
        entries[cur] = m
        cur = cur * g
    return DlogTable(ctx, M, entries)


def decrypt_trigger(uk, t, table):
    if not isinstance(uk.policy, TriggerPolicy):
        raise PolicyError("decrypt_trigger needs a trigger key")
    return table.lookup(t.body / t.proof_part ** uk.z)


def decrypt_window(uk, i, E1, E2, table):
    """Recover the exact sum of window i; raises TableMiss when unauthorized."""
    if not isinstance(uk.policy, WindowPolicy):
        raise PolicyError("decrypt_window needs a window key")
    if i < 0:
        raise WindowError("window index must be non-negative")
    ctx = E1.ctx
    p = ctx.order
    w = E1 / E2 ** uk.z
    unblind = pow(2, i, p) * uk.sigma % p
    total = table.lookup(w / ctx.gt_pow(unblind))
    return WindowSum(total, uk.policy.beta)
