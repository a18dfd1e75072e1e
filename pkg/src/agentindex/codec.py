"""Length-prefixed binary framing used for signing payloads and record bodies.

Every field is written as a 4-byte big-endian length followed by its bytes.
Nested structures are framed recursively, so a decoder never has to guess
where one field ends.
"""

from __future__ import annotations

import struct

from .errors import DecodeError

_LEN = struct.Struct(">I")
_I64 = struct.Struct(">q")
_U64 = struct.Struct(">Q")
_F64 = struct.Struct(">d")


def pack(*fields: bytes) -> bytes:
    out = bytearray()
    for f in fields:
        out += _LEN.pack(len(f))
        out += f
    return bytes(out)


def unpack(data: bytes, count: int | None = None) -> list[bytes]:
    """Split ``data`` into its framed fields.

    Raises DecodeError on truncation, trailing garbage or a field count
    other than ``count``.
    """
    fields = []
    pos = 0
    end = len(data)
    while pos < end:
        if pos + 4 > end:
            raise DecodeError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + n > end:
            raise DecodeError("field runs past end of buffer")
        fields.append(bytes(data[pos : pos + n]))
        pos += n
    if count is not None and len(fields) != count:
        raise DecodeError(f"expected {count} fields, found {len(fields)}")
    return fields


def i64(n: int) -> bytes:
    return _I64.pack(n)


def u64(n: int) -> bytes:
    return _U64.pack(n)


def f64(x: float) -> bytes:
    return _F64.pack(x)


def read_i64(b: bytes) -> int:
    if len(b) != 8:
        raise DecodeError("bad i64 width")
    return _I64.unpack(b)[0]


def read_u64(b: bytes) -> int:
    if len(b) != 8:
        raise DecodeError("bad u64 width")
    return _U64.unpack(b)[0]


def read_f64(b: bytes) -> float:
    if len(b) != 8:
        raise DecodeError("bad f64 width")
    return _F64.unpack(b)[0]


def text(s: str) -> bytes:
    return s.encode("utf-8")


def read_text(b: bytes) -> str:
    try:
        return b.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError("invalid utf-8") from exc
