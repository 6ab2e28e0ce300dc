"""Little-endian, length-prefixed binary encoding helpers.

Every wire format in the package (state blobs, diffs, protocol messages,
attested field encodings, channel state digests) is built from these
primitives so sizes and digests are bit-exact and reproducible.
"""

from __future__ import annotations

import struct


def pack_u8(value: int) -> bytes:
    return struct.pack("<B", value)


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_u64(value: int) -> bytes:
    return struct.pack("<Q", value)


def pack_bytes(data: bytes) -> bytes:
    """u32 length prefix followed by the raw bytes."""
    return struct.pack("<I", len(data)) + data


def pack_short_bytes(data: bytes) -> bytes:
    """u16 length prefix, for small fields like signatures."""
    if len(data) > 0xFFFF:
        raise ValueError(f"field too long for u16 prefix: {len(data)}")
    return struct.pack("<H", len(data)) + data


def pack_tag(tag: str, width: int = 16) -> bytes:
    """ASCII tag padded with NUL bytes to a fixed width."""
    raw = tag.encode("ascii")
    if len(raw) > width:
        raise ValueError(f"tag {tag!r} longer than {width} bytes")
    return raw.ljust(width, b"\x00")


def unpack_tag(data: bytes) -> str:
    return data.rstrip(b"\x00").decode("ascii")


class Reader:
    """Cursor over a byte string; raises ValueError on truncated input."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ValueError("truncated record")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def bytes(self) -> bytes:
        return self._take(self.u32())

    def short_bytes(self) -> bytes:
        n = struct.unpack("<H", self._take(2))[0]
        return self._take(n)

    def tag(self, width: int = 16) -> str:
        return unpack_tag(self._take(width))

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self.remaining:
            raise ValueError(f"{self.remaining} trailing bytes in record")
