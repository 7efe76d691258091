"""Canonical binary and text forms for keys and ciphertexts.

Every object starts with a type byte and a version byte (``0x01``). Group
elements follow in a single length-prefixed block of fixed-width encodings,
so adding one element grows an object by exactly one element's size.

Ciphertext records do not repeat their window sizes: bodies are stored in
ascending window-size order and the stream's window sizes (announced once
at stream registration) must be passed to :func:`loads`.

The text form is standard base-64 of the binary form.
"""

import base64
import binascii

from .abe import (
    CiphertextRecord,
    MasterKey,
    PublicKey,
    TransformedCiphertext,
    TransformKey,
    UserKey,
    WindowSecrets,
)
from .attributes import UNIVERSE, Attribute, attribute_codes
from .codec import Reader, Writer
from .errors import DeserializationError, PolicyError
from .policies import TriggerPolicy, WindowPolicy
from .tree import OPS, AccessTree, Gate, Leaf

VERSION = 0x01

T_PUBLIC_KEY = 0x01
T_MASTER_KEY = 0x02
T_WINDOW_SECRETS = 0x03
T_TRANSFORM_KEY = 0x04
T_USER_KEY = 0x05
T_CIPHERTEXT = 0x06
T_TRANSFORMED = 0x07


# -- policies and trees --------------------------------------------------------

def write_policy(w, policy):
    if isinstance(policy, TriggerPolicy):
        w.u8(0).u8(OPS.index(policy.op)).u64(policy.theta)
    elif isinstance(policy, WindowPolicy):
        w.u8(1).u64(policy.alpha).u32(policy.beta)
    else:
        raise TypeError(f"not a policy: {policy!r}")


def read_policy(r):
    kind = r.u8()
    try:
        if kind == 0:
            op = r.u8()
            if op >= len(OPS):
                raise DeserializationError(f"unknown comparison code {op}")
            return TriggerPolicy(r.u64(), OPS[op])
        if kind == 1:
            return WindowPolicy(r.u64(), r.u32())
    except PolicyError as exc:
        raise DeserializationError(str(exc)) from None
    raise DeserializationError(f"unknown policy kind {kind}")


def _write_node(w, node):
    if isinstance(node, Leaf):
        w.u8(0).u8(node.attr.code)
    else:
        w.u8(1).u16(node.threshold).u16(len(node.children))
        for child in node.children:
            _write_node(w, child)


def _read_node(r, depth=0):
    if depth > 256:
        raise DeserializationError("access tree too deep")
    tag = r.u8()
    if tag == 0:
        code = r.u8()
        if code >= len(UNIVERSE):
            raise DeserializationError(f"attribute code {code} outside the universe")
        return Leaf(Attribute.from_code(code))
    if tag == 1:
        threshold, n = r.u16(), r.u16()
        children = tuple(_read_node(r, depth + 1) for _ in range(n))
        try:
            return Gate(threshold, children)
        except ValueError as exc:
            raise DeserializationError(str(exc)) from None
    raise DeserializationError(f"unknown tree node tag {tag}")


# -- encoders --------------------------------------------------------------------

def _header(type_byte):
    return Writer().u8(type_byte).u8(VERSION)


def dumps(obj):
    """Binary form of any key or ciphertext object."""
    if isinstance(obj, PublicKey):
        ctx = obj.ctx
        return _header(T_PUBLIC_KEY).elements(ctx, [obj.Y] + [obj.T[a] for a in UNIVERSE]).getvalue()
    if isinstance(obj, MasterKey):
        w = _header(T_MASTER_KEY).scalar(obj.y)
        for a in UNIVERSE:
            w.scalar(obj.t[a])
        return w.getvalue()
    if isinstance(obj, WindowSecrets):
        w = _header(T_WINDOW_SECRETS).u32(obj.beta)
        for x in obj.R:
            w.scalar(x)
        return w.getvalue()
    if isinstance(obj, TransformKey):
        w = _header(T_TRANSFORM_KEY)
        write_policy(w, obj.policy)
        w.u8(obj.tree.width)
        _write_node(w, obj.tree.root)
        return w.elements(obj.ctx, [obj.D[path] for path, _ in obj.tree.leaves()]).getvalue()
    if isinstance(obj, UserKey):
        w = _header(T_USER_KEY)
        write_policy(w, obj.policy)
        w.scalar(obj.z)
        if obj.sigma is not None:
            w.scalar(obj.sigma)
        return w.getvalue()
    if isinstance(obj, CiphertextRecord):
        w = _header(T_CIPHERTEXT).u8(obj.width).u64(obj.k)
        codes = attribute_codes(obj.k, obj.width)
        if len(codes) != len(obj.Eprime):
            raise ValueError("record attributes do not match its key")
        elems = [obj.Eprime[UNIVERSE[c]] for c in codes]
        elems.append(obj.trigger_body)
        elems.extend(obj.window_bodies[b] for b in sorted(obj.window_bodies))
        return w.elements(obj.ctx, elems).getvalue()
    if isinstance(obj, TransformedCiphertext):
        w = _header(T_TRANSFORMED).u64(obj.k)
        return w.elements(obj.body.ctx, [obj.body, obj.proof_part]).getvalue()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- decoders --------------------------------------------------------------------

def loads(data, ctx, window_sizes=None):
    """Inverse of :func:`dumps`.

    ``window_sizes`` is required for ciphertext records (see module doc).
    """
    r = Reader(data)
    type_byte = r.u8()
    version = r.u8()
    if version != VERSION:
        raise DeserializationError(f"unsupported version {version}")
    try:
        obj = _DECODERS[type_byte](r, ctx, window_sizes)
    except KeyError:
        raise DeserializationError(f"unknown type byte {type_byte:#x}") from None
    r.done()
    return obj


def _load_public_key(r, ctx, _):
    chunks = r.element_block(ctx)
    if len(chunks) != 1 + len(UNIVERSE):
        raise DeserializationError("public key has the wrong number of elements")
    Y = ctx.deserialize_gt(chunks[0])
    return PublicKey(Y, {a: ctx.deserialize_g(c) for a, c in zip(UNIVERSE, chunks[1:])})


def _load_master_key(r, ctx, _):
    y = _checked(r.scalar(), ctx)
    return MasterKey(y, {a: _checked(r.scalar(), ctx) for a in UNIVERSE})


def _load_window_secrets(r, ctx, _):
    beta = r.u32()
    if beta == 0:
        raise DeserializationError("window size must be positive")
    if beta > r.remaining:
        raise DeserializationError("truncated window secrets")
    return WindowSecrets(beta, tuple(_checked(r.scalar(), ctx) for _ in range(beta)))


def _load_transform_key(r, ctx, _):
    policy = read_policy(r)
    width = r.u8()
    if not (1 <= width <= 64):
        raise DeserializationError(f"bad key width {width}")
    tree = AccessTree(_read_node(r), width)
    leaves = tree.leaves()
    chunks = r.element_block(ctx)
    if len(chunks) != len(leaves):
        raise DeserializationError("transform key element count does not match its tree")
    return TransformKey(policy, tree, {path: ctx.deserialize_g(c) for (path, _), c in zip(leaves, chunks)})


def _load_user_key(r, ctx, _):
    policy = read_policy(r)
    z = _checked(r.scalar(), ctx)
    sig = _checked(r.scalar(), ctx) if isinstance(policy, WindowPolicy) else None
    return UserKey(policy, z, sig)


def _load_ciphertext(r, ctx, window_sizes):
    if window_sizes is None:
        raise DeserializationError("ciphertext decoding needs the stream's window sizes")
    sizes = sorted(set(window_sizes))
    width = r.u8()
    if not (1 <= width <= 64):
        raise DeserializationError(f"bad key width {width}")
    k = r.u64()
    if k >> width:
        raise DeserializationError(f"key {k} exceeds width {width}")
    codes = attribute_codes(k, width)
    chunks = r.element_block(ctx)
    if len(chunks) != len(codes) + 1 + len(sizes):
        raise DeserializationError("ciphertext element count does not match key and window sizes")
    Eprime = {UNIVERSE[c]: ctx.deserialize_g(ch) for c, ch in zip(codes, chunks)}
    trigger = ctx.deserialize_gt(chunks[len(codes)])
    bodies = {b: ctx.deserialize_gt(ch) for b, ch in zip(sizes, chunks[len(codes) + 1 :])}
    return CiphertextRecord(k, Eprime, trigger, bodies, width)


def _load_transformed(r, ctx, _):
    k = r.u64()
    chunks = r.element_block(ctx)
    if len(chunks) != 2:
        raise DeserializationError("transformed ciphertext needs two elements")
    return TransformedCiphertext(k, ctx.deserialize_gt(chunks[0]), ctx.deserialize_gt(chunks[1]))


def _checked(x, ctx):
    if x >= ctx.order:
        raise DeserializationError("scalar out of range")
    return x


_DECODERS = {
    T_PUBLIC_KEY: _load_public_key,
    T_MASTER_KEY: _load_master_key,
    T_WINDOW_SECRETS: _load_window_secrets,
    T_TRANSFORM_KEY: _load_transform_key,
    T_USER_KEY: _load_user_key,
    T_CIPHERTEXT: _load_ciphertext,
    T_TRANSFORMED: _load_transformed,
}


# -- text form -------------------------------------------------------------------

def to_text(obj):
    return base64.b64encode(dumps(obj)).decode("ascii")


def from_text(text, ctx, window_sizes=None):
    try:
        data = base64.b64decode(text.strip(), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise DeserializationError(f"invalid base-64: {exc}") from None
    return loads(data, ctx, window_sizes)
