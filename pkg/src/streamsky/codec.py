"""Big-endian primitive writer/reader used by every binary layout."""

import struct

from .errors import DeserializationError

_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class Writer:
    def __init__(self):
        self._parts = []

    def u8(self, v):
        self._parts.append(_U8.pack(v))
        return self

    def u16(self, v):
        self._parts.append(_U16.pack(v))
        return self

    def u32(self, v):
        self._parts.append(_U32.pack(v))
        return self

    def u64(self, v):
        self._parts.append(_U64.pack(v))
        return self

    def raw(self, data):
        self._parts.append(bytes(data))
        return self

    def blob(self, data):
        """u32 length then bytes."""
        data = bytes(data)
        self.u32(len(data))
        self._parts.append(data)
        return self

    def text(self, s):
        return self.blob(s.encode("utf-8"))

    def scalar(self, x):
        """Non-negative integer as u16 length + minimal big-endian bytes."""
        data = x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")
        self.u16(len(data))
        self._parts.append(data)
        return self

    def elements(self, ctx, elems):
        """A block of fixed-width elements behind one u32 length prefix."""
        return self.blob(b"".join(ctx.serialize(e) for e in elems))

    def getvalue(self):
        return b"".join(self._parts)


class Reader:
    def __init__(self, data):
        self._data = memoryview(bytes(data))
        self._pos = 0

    @property
    def remaining(self):
        return len(self._data) - self._pos

    def _take(self, n):
        if n < 0 or self._pos + n > len(self._data):
            raise DeserializationError(f"truncated input: need {n} bytes at offset {self._pos}")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self):
        return _U8.unpack(self._take(1))[0]

    def u16(self):
        return _U16.unpack(self._take(2))[0]

    def u32(self):
        return _U32.unpack(self._take(4))[0]

    def u64(self):
        return _U64.unpack(self._take(8))[0]

    def raw(self, n):
        return bytes(self._take(n))

    def blob(self):
        return bytes(self._take(self.u32()))

    def text(self):
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DeserializationError(f"invalid UTF-8: {exc}") from None

    def scalar(self):
        n = self.u16()
        if n == 0:
            raise DeserializationError("empty scalar")
        data = self._take(n)
        if n > 1 and data[0] == 0:
            raise DeserializationError("non-canonical scalar encoding")
        return int.from_bytes(data, "big")

    def element_block(self, ctx):
        """Split a length-prefixed block into fixed-width chunks (not yet decoded)."""
        block = self.blob()
        size = ctx.element_size
        if len(block) % size:
            raise DeserializationError(f"element block of {len(block)} bytes is not a multiple of {size}")
        return [block[i : i + size] for i in range(0, len(block), size)]

    def done(self):
        if self.remaining:
            raise DeserializationError(f"{self.remaining} trailing bytes")
