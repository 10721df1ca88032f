"""Canonical binary encoding.

The encoding rule is fixed and custom so golden bytes are portable across
implementations:

* struct fields in declaration order, no framing between them;
* integers little-endian fixed-width (u8, u32, u64, i32);
* booleans one byte, 0 or 1;
* byte strings and text (UTF-8) length-prefixed with a u32 count;
* sequences length-prefixed with a u32 element count;
* options one tag byte (0 absent, 1 present) then the payload;
* fixed-width digests/keys/signatures written raw, no prefix.

Decoding is strict: truncated input or trailing bytes raise DecodeError.
Domain types implement ``encode_into(writer)`` and a ``decode_from(reader)``
classmethod; :func:`canonical_encode` / :func:`canonical_decode` are the
top-level entry points.
"""

from __future__ import annotations

import struct
from typing import Any, Callable, Protocol, TypeVar

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I32 = struct.Struct("<i")

U32_MAX = 0xFFFFFFFF
U64_MAX = 0xFFFFFFFFFFFFFFFF


class DecodeError(ValueError):
    """Raised on truncated input, trailing bytes, or malformed tags."""


class Writer:
    """Accumulates canonical bytes."""

    __slots__ = ("_parts",)

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> None:
        if not 0 <= value <= 0xFF:
            raise ValueError(f"u8 out of range: {value}")
        self._parts.append(bytes((value,)))

    def u32(self, value: int) -> None:
        if not 0 <= value <= U32_MAX:
            raise ValueError(f"u32 out of range: {value}")
        self._parts.append(_U32.pack(value))

    def u64(self, value: int) -> None:
        if not 0 <= value <= U64_MAX:
            raise ValueError(f"u64 out of range: {value}")
        self._parts.append(_U64.pack(value))

    def i32(self, value: int) -> None:
        self._parts.append(_I32.pack(value))

    def boolean(self, value: bool) -> None:
        self._parts.append(b"\x01" if value else b"\x00")

    def fixed(self, value: bytes, size: int) -> None:
        """Raw bytes of a known fixed width (hashes, keys, signatures)."""
        if len(value) != size:
            raise ValueError(f"expected {size} bytes, got {len(value)}")
        self._parts.append(value)

    def blob(self, value: bytes) -> None:
        self.u32(len(value))
        self._parts.append(bytes(value))

    def text(self, value: str) -> None:
        self.blob(value.encode("utf-8"))

    def seq(self, items: list, write_item: Callable[[Writer, Any], None]) -> None:
        self.u32(len(items))
        for item in items:
            write_item(self, item)

    def option(self, value, write_value: Callable[[Writer, Any], None]) -> None:
        if value is None:
            self.u8(0)
        else:
            self.u8(1)
            write_value(self, value)

    def finish(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Strict cursor over canonical bytes."""

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise DecodeError(
                f"truncated input: wanted {n} bytes at offset {self._pos}, "
                f"have {len(self._data) - self._pos}"
            )
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def i32(self) -> int:
        return _I32.unpack(self._take(4))[0]

    def boolean(self) -> bool:
        tag = self.u8()
        if tag not in (0, 1):
            raise DecodeError(f"malformed boolean tag {tag}")
        return tag == 1

    def fixed(self, size: int) -> bytes:
        return self._take(size)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        raw = self.blob()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8 text: {exc}") from exc

    def seq(self, read_item: Callable[[Reader], Any]) -> list:
        count = self.u32()
        return [read_item(self) for _ in range(count)]

    def option(self, read_value: Callable[[Reader], Any]):
        tag = self.u8()
        if tag == 0:
            return None
        if tag == 1:
            return read_value(self)
        raise DecodeError(f"malformed option tag {tag}")

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(
                f"trailing bytes: {len(self._data) - self._pos} after offset {self._pos}"
            )


class Encodable(Protocol):
    def encode_into(self, writer: Writer) -> None: ...


T = TypeVar("T")


def canonical_encode(value: Encodable) -> bytes:
    """Canonical bytes of any domain type exposing ``encode_into``."""
    writer = Writer()
    value.encode_into(writer)
    return writer.finish()


def canonical_decode(cls: type[T], data: bytes) -> T:
    """Decode *data* as *cls*; the full input must be consumed."""
    reader = Reader(data)
    value = cls.decode_from(reader)  # type: ignore[attr-defined]
    reader.expect_end()
    return value
