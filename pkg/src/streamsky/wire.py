"""Messages and framing between owner, cloud and user.

Frame::

    +----------------+---------------------------------------------+
    | u32 BE length  | payload (length bytes, at most max_frame)   |
    +----------------+---------------------------------------------+

Payload::

    u8 version (0x01) | u8 tag | fields...

Field encodings (all big-endian): ``str`` = u32 length + UTF-8; ``u32``,
``u64`` fixed width; ``obj`` = u32 length + the object's canonical binary
form (see :mod:`streamsky.serialize`); ``elems`` = u32 length + fixed-width
group elements back to back.

======  ================  ====================================================
tag     message           fields
======  ================  ====================================================
0x01    RegisterStream    str stream_id, obj public_key, u32 n, n x u32 beta
0x02    UploadPolicy      str policy_xml
0x03    Grant             str policy_id, str user_id, obj transform_key
0x04    CiphertextMsg     str stream_id, u32 n, n x u32 beta, obj record,
                          str request_xml
0x05    Subscribe         str user_id, str policy_id
0x06    TriggerDelivery   str policy_id, u64 k, elems (body, proof_part)
0x07    WindowDelivery    str policy_id, u64 i, elems (E1, E2)
0x08    Error             u32 code, str text
0x09    KeyMaterial       str user_id, str policy_id, str stream_id, obj user_key
======  ================  ====================================================

Deliveries carry only target-group elements and public indices.
"""

import struct
import threading
from dataclasses import dataclass

from . import serialize
from .abe import CiphertextRecord, PublicKey, TransformKey, UserKey
from .codec import Reader, Writer
from .errors import ConnectionClosed, DeserializationError, FrameTooLarge, WireError

VERSION = 0x01
MAX_FRAME = 1 << 20
_LEN = struct.Struct(">I")


@dataclass(frozen=True)
class RegisterStream:
    stream_id: str
    public_key: PublicKey
    window_sizes: tuple


@dataclass(frozen=True)
class UploadPolicy:
    policy_xml: str


@dataclass(frozen=True)
class Grant:
    policy_id: str
    user_id: str
    transform_key: TransformKey


@dataclass(frozen=True)
class CiphertextMsg:
    stream_id: str
    record: CiphertextRecord
    request_xml: str


@dataclass(frozen=True)
class Subscribe:
    user_id: str
    policy_id: str


@dataclass(frozen=True)
class TriggerDelivery:
    policy_id: str
    k: int
    body: object
    proof_part: object


@dataclass(frozen=True)
class WindowDelivery:
    policy_id: str
    i: int
    E1: object
    E2: object


@dataclass(frozen=True)
class Error:
    code: int
    text: str


@dataclass(frozen=True)
class KeyMaterial:
    user_id: str
    policy_id: str
    stream_id: str
    user_key: UserKey


TAGS = {
    RegisterStream: 0x01,
    UploadPolicy: 0x02,
    Grant: 0x03,
    CiphertextMsg: 0x04,
    Subscribe: 0x05,
    TriggerDelivery: 0x06,
    WindowDelivery: 0x07,
    Error: 0x08,
    KeyMaterial: 0x09,
}


def _sizes(w, sizes):
    sizes = sorted(set(sizes))
    w.u32(len(sizes))
    for b in sizes:
        w.u32(b)


def _read_sizes(r):
    n = r.u32()
    if n * 4 > r.remaining:
        raise DeserializationError("window size list longer than payload")
    return tuple(r.u32() for _ in range(n))


class Codec:
    """Message <-> payload bytes for one group context."""

    def __init__(self, ctx, max_frame=MAX_FRAME):
        self.ctx = ctx
        self.max_frame = max_frame

    def encode(self, msg):
        tag = TAGS.get(type(msg))
        if tag is None:
            raise WireError(f"not a message: {type(msg).__name__}")
        w = Writer().u8(VERSION).u8(tag)
        ctx = self.ctx
        if isinstance(msg, RegisterStream):
            w.text(msg.stream_id).blob(serialize.dumps(msg.public_key))
            _sizes(w, msg.window_sizes)
        elif isinstance(msg, UploadPolicy):
            w.text(msg.policy_xml)
        elif isinstance(msg, Grant):
            w.text(msg.policy_id).text(msg.user_id).blob(serialize.dumps(msg.transform_key))
        elif isinstance(msg, CiphertextMsg):
            w.text(msg.stream_id)
            _sizes(w, msg.record.window_bodies)
            w.blob(serialize.dumps(msg.record)).text(msg.request_xml)
        elif isinstance(msg, Subscribe):
            w.text(msg.user_id).text(msg.policy_id)
        elif isinstance(msg, TriggerDelivery):
            w.text(msg.policy_id).u64(msg.k).elements(ctx, [msg.body, msg.proof_part])
        elif isinstance(msg, WindowDelivery):
            w.text(msg.policy_id).u64(msg.i).elements(ctx, [msg.E1, msg.E2])
        elif isinstance(msg, Error):
            w.u32(msg.code).text(msg.text)
        else:
            w.text(msg.user_id).text(msg.policy_id).text(msg.stream_id).blob(serialize.dumps(msg.user_key))
        data = w.getvalue()
        if len(data) > self.max_frame:
            raise FrameTooLarge(f"message of {len(data)} bytes exceeds {self.max_frame}")
        return data

    def decode(self, data):
        try:
            return self._decode(Reader(data))
        except (struct.error, UnicodeDecodeError) as exc:
            raise DeserializationError(str(exc)) from None

    def _decode(self, r):
        version = r.u8()
        if version != VERSION:
            raise WireError(f"unsupported wire version {version}")
        tag = r.u8()
        ctx = self.ctx
        if tag == 0x01:
            stream_id = r.text()
            pk = serialize.loads(r.blob(), ctx)
            msg = RegisterStream(stream_id, _expect(pk, PublicKey), _read_sizes(r))
        elif tag == 0x02:
            msg = UploadPolicy(r.text())
        elif tag == 0x03:
            policy_id, user_id = r.text(), r.text()
            msg = Grant(policy_id, user_id, _expect(serialize.loads(r.blob(), ctx), TransformKey))
        elif tag == 0x04:
            stream_id = r.text()
            sizes = _read_sizes(r)
            record = serialize.loads(r.blob(), ctx, sizes)
            msg = CiphertextMsg(stream_id, _expect(record, CiphertextRecord), r.text())
        elif tag == 0x05:
            msg = Subscribe(r.text(), r.text())
        elif tag in (0x06, 0x07):
            policy_id, index = r.text(), r.u64()
            chunks = r.element_block(ctx)
            if len(chunks) != 2:
                raise DeserializationError("delivery needs exactly two elements")
            a, b = (ctx.deserialize_gt(c) for c in chunks)
            cls = TriggerDelivery if tag == 0x06 else WindowDelivery
            msg = cls(policy_id, index, a, b)
        elif tag == 0x08:
            msg = Error(r.u32(), r.text())
        elif tag == 0x09:
            user_id, policy_id, stream_id = r.text(), r.text(), r.text()
            msg = KeyMaterial(user_id, policy_id, stream_id, _expect(serialize.loads(r.blob(), ctx), UserKey))
        else:
            raise WireError(f"unknown message tag {tag:#x}")
        r.done()
        return msg

    # -- framing --

    def frame(self, msg):
        data = self.encode(msg)
        return _LEN.pack(len(data)) + data

    def write_frame(self, stream, msg):
        stream.write(self.frame(msg))
        flush = getattr(stream, "flush", None)
        if flush is not None:
            flush()

    def read_frame(self, stream):
        """Next message, or None on a clean end of stream between frames."""
        header = _read_exact(stream, 4, allow_eof=True)
        if header is None:
            return None
        (length,) = _LEN.unpack(header)
        if length > self.max_frame:
            raise FrameTooLarge(f"declared frame length {length} exceeds {self.max_frame}")
        return self.decode(_read_exact(stream, length))

    def iter_frames(self, stream):
        while True:
            msg = self.read_frame(stream)
            if msg is None:
                return
            yield msg


def _expect(obj, cls):
    if not isinstance(obj, cls):
        raise DeserializationError(f"expected {cls.__name__}, got {type(obj).__name__}")
    return obj


def _read_exact(stream, n, allow_eof=False):
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            if allow_eof and not buf:
                return None
            raise ConnectionClosed(f"peer closed mid-frame ({len(buf)}/{n} bytes)")
        buf += chunk
    return bytes(buf)


class MemoryPipe:
    """In-memory reliable byte stream for tests and in-process runs.

    ``read(n)`` blocks until at least one byte is available and may return
    fewer than n bytes, like a socket. ``chunk`` caps how much one read
    returns, to exercise partial-read handling.
    """

    def __init__(self, chunk=None):
        self._buf = bytearray()
        self._closed = False
        self._cond = threading.Condition()
        self.chunk = chunk

    def write(self, data):
        with self._cond:
            if self._closed:
                raise ConnectionClosed("write to closed pipe")
            self._buf += data
            self._cond.notify_all()

    def read(self, n=-1):
        with self._cond:
            while not self._buf and not self._closed:
                self._cond.wait()
            if n < 0:
                n = len(self._buf)
            if self.chunk:
                n = min(n, self.chunk)
            out = bytes(self._buf[:n])
            del self._buf[:n]
            return out

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def pending(self):
        with self._cond:
            return len(self._buf)
