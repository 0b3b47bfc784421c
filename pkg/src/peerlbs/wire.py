"""Fixed-width little-endian field packing shared by every encoder."""

from __future__ import annotations

import struct


class MalformedBytes(ValueError):
    pass


_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I32 = struct.Struct("<i")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def u8(self, v: int):
        self._parts.append(_U8.pack(v))
        return self

    def u16(self, v: int):
        self._parts.append(_U16.pack(v))
        return self

    def u32(self, v: int):
        self._parts.append(_U32.pack(v))
        return self

    def u64(self, v: int):
        self._parts.append(_U64.pack(v))
        return self

    def i32(self, v: int):
        self._parts.append(_I32.pack(v))
        return self

    def i64(self, v: int):
        self._parts.append(_I64.pack(v))
        return self

    def f64(self, v: float):
        self._parts.append(_F64.pack(v))
        return self

    def blob(self, b: bytes):
        self._parts.append(_U32.pack(len(b)))
        self._parts.append(bytes(b))
        return self

    def raw(self, b: bytes):
        self._parts.append(bytes(b))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self._data = memoryview(bytes(data))
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise MalformedBytes(f"need {n} bytes at offset {self._pos}, have {len(self._data) - self._pos}")
        chunk = self._data[self._pos:end].tobytes()
        self._pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u16(self) -> int:
        return _U16.unpack(self._take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def i32(self) -> int:
        return _I32.unpack(self._take(4))[0]

    def i64(self) -> int:
        return _I64.unpack(self._take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def at_end(self) -> bool:
        return self._pos == len(self._data)

    def expect_end(self):
        if not self.at_end():
            raise MalformedBytes(f"{len(self._data) - self._pos} trailing bytes")
