"""Bit and symbol supply.

All byte input is expanded least-significant-bit first: the byte ``0x01``
yields the bits ``1, 0, 0, 0, 0, 0, 0, 0``. Symbols of ``b`` bits are
consecutive, non-overlapping groups of the bit stream, packed with the
first bit as the least significant one.

The seeded generator is numpy's PCG64 (period 2**128). Its raw 64-bit
outputs are serialised little-endian, so the byte stream depends only on
the seed and never on how it is requested.
"""

from __future__ import annotations

import hashlib
import os
import sys
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np


class EndOfStream(EOFError):
    """Raised when fewer bits remain than were requested."""


def unpack_bits(data: bytes | np.ndarray) -> np.ndarray:
    arr = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else data
    return np.unpackbits(arr, bitorder="little")


def pack_bits(bits: np.ndarray) -> bytes:
    """Inverse of :func:`unpack_bits`; ``len(bits)`` must be a multiple of 8."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise ValueError("bit count must be a multiple of 8")
    return np.packbits(bits, bitorder="little").tobytes()


class BitSource:
    """Single-consumer stream of bits.

    Subclasses supply raw bytes through :meth:`_read_bytes`. Bits left over
    from a partially consumed byte are kept, so any split of a request into
    smaller requests returns the same bits in the same order.
    """

    kind = "abstract"

    def __init__(self) -> None:
        self._pending = np.empty(0, dtype=np.uint8)
        self._exhausted = False
        self.bits_read = 0

    def _read_bytes(self, count: int) -> bytes:  # pragma: no cover - abstract
        raise NotImplementedError

    def _fill(self, count: int) -> None:
        while self._pending.size < count and not self._exhausted:
            need = (count - self._pending.size + 7) // 8
            chunk = self._read_bytes(need)
            if not chunk:
                self._exhausted = True
                break
            self._pending = np.concatenate([self._pending, unpack_bits(chunk)])

    def read_bits(self, count: int) -> np.ndarray:
        """Return up to ``count`` bits; fewer only at end of stream."""
        if count < 0:
            raise ValueError("count must be non-negative")
        self._fill(count)
        out, self._pending = self._pending[:count], self._pending[count:]
        self.bits_read += out.size
        return out

    def next_bits(self, count: int) -> np.ndarray:
        """Return exactly ``count`` bits or raise :class:`EndOfStream`."""
        self._fill(count)
        if self._pending.size < count:
            raise EndOfStream(f"requested {count} bits, {self._pending.size} remain")
        return self.read_bits(count)

    def chunks(self, chunk_bits: int) -> Iterator[np.ndarray]:
        while True:
            bits = self.read_bits(chunk_bits)
            if bits.size == 0:
                return
            yield bits

    def identity(self) -> dict:
        return {"kind": self.kind}

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class SeededSource(BitSource):
    kind = "seeded-generator"

    def __init__(self, seed: int) -> None:
        super().__init__()
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self._gen = np.random.PCG64(seed)
        self._buf = b""

    def _read_bytes(self, count: int) -> bytes:
        if len(self._buf) < count:
            words = (count - len(self._buf) + 7) // 8
            raw = self._gen.random_raw(words).astype("<u8").tobytes()
            self._buf += raw
        out, self._buf = self._buf[:count], self._buf[count:]
        return out

    def identity(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "generator": "numpy.PCG64/random_raw/le"}


class StreamSource(BitSource):
    """Bits from a binary file object; ``buffer_size`` only affects I/O."""

    kind = "stream"

    def __init__(self, fh: BinaryIO, buffer_size: int = 1 << 20, name: str = "<stream>") -> None:
        super().__init__()
        self._fh = fh
        self.buffer_size = max(1, int(buffer_size))
        self.name = name
        self._hash = hashlib.sha256()
        self.bytes_read = 0
        self._buf = bytearray()

    def _read_bytes(self, count: int) -> bytes:
        while len(self._buf) < count:
            chunk = self._fh.read(self.buffer_size)
            if not chunk:
                break
            self._hash.update(chunk)
            self.bytes_read += len(chunk)
            self._buf += chunk
        out = bytes(self._buf[:count])
        del self._buf[:count]
        return out

    @property
    def sha256(self) -> str:
        return self._hash.hexdigest()

    def identity(self) -> dict:
        return {"kind": self.kind, "name": self.name}


class FileSource(StreamSource):
    kind = "file"

    def __init__(self, path: str | os.PathLike, buffer_size: int = 1 << 20) -> None:
        self.path = os.fspath(path)
        super().__init__(open(self.path, "rb"), buffer_size, name=self.path)

    def identity(self) -> dict:
        st = os.stat(self.path)
        h = hashlib.sha256()
        with open(self.path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
        return {"kind": self.kind, "path": self.path, "size": st.st_size, "sha256": h.hexdigest()}

    def close(self) -> None:
        self._fh.close()


class StdinSource(StreamSource):
    kind = "stdin"

    def __init__(self, buffer_size: int = 1 << 20) -> None:
        super().__init__(sys.stdin.buffer, buffer_size, name="-")


class BytesSource(StreamSource):
    """In-memory bytes; handy for fixtures."""

    kind = "bytes"

    def __init__(self, data: bytes, buffer_size: int = 1 << 20) -> None:
        import io

        super().__init__(io.BytesIO(data), buffer_size, name="<bytes>")


def open_source(input_path: str | None, seed: int | None, buffer_size: int = 1 << 20) -> BitSource:
    if input_path is None:
        if seed is None:
            raise ValueError("either an input path or a seed is required")
        return SeededSource(seed)
    if input_path == "-":
        return StdinSource(buffer_size)
    return FileSource(input_path, buffer_size)


class SymbolStream:
    """Groups of ``symbol_bits`` consecutive bits read as integers in [0, 2**b)."""

    def __init__(self, source: BitSource, symbol_bits: int = 4) -> None:
        if symbol_bits < 1:
            raise ValueError("symbol_bits must be >= 1")
        self.source = source
        self.symbol_bits = symbol_bits
        self._weights = (1 << np.arange(symbol_bits, dtype=np.int64)).astype(np.int64)

    @property
    def alphabet_size(self) -> int:
        return 1 << self.symbol_bits

    def next_symbol(self) -> int:
        bits = self.source.next_bits(self.symbol_bits)
        return int(bits.astype(np.int64) @ self._weights)

    def next_symbols(self, count: int) -> np.ndarray:
        bits = self.source.next_bits(count * self.symbol_bits)
        return bits_to_symbols(bits, self.symbol_bits)

    def read_symbols(self, count: int) -> np.ndarray:
        """Up to ``count`` symbols; a trailing partial symbol is dropped."""
        bits = self.source.read_bits(count * self.symbol_bits)
        usable = bits.size - bits.size % self.symbol_bits
        return bits_to_symbols(bits[:usable], self.symbol_bits)


def bits_to_symbols(bits: np.ndarray, symbol_bits: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % symbol_bits:
        raise ValueError("bit count must be a multiple of symbol_bits")
    if symbol_bits <= 8:
        groups = bits.reshape(-1, symbol_bits)
        weights = (1 << np.arange(symbol_bits)).astype(np.uint8)
        return (groups * weights).sum(axis=1, dtype=np.int64)
    weights = 1 << np.arange(symbol_bits, dtype=np.int64)
    return bits.reshape(-1, symbol_bits).astype(np.int64) @ weights


def symbols_to_bits(symbols: np.ndarray, symbol_bits: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(symbol_bits, dtype=np.int64)
    return ((symbols[:, None] >> shifts) & 1).astype(np.uint8).ravel()


@dataclass(frozen=True)
class BiasModel:
    """Force ``forced_ones`` leading bits to 1 in one of every ``tamper_period`` sequences."""

    forced_ones: int
    tamper_period: int
    sequence_length: int

    def __post_init__(self) -> None:
        if self.forced_ones < 0:
            raise ValueError("forced_ones must be >= 0")
        if self.tamper_period < 1:
            raise ValueError("tamper_period must be >= 1")
        if self.forced_ones > self.sequence_length:
            raise ValueError(
                f"cannot force {self.forced_ones} bits in a {self.sequence_length}-bit sequence"
            )

    def is_tampered(self, sequence_index: int) -> bool:
        return sequence_index % self.tamper_period == 0


def apply_bias(sequence: np.ndarray, model: BiasModel, sequence_index: int) -> np.ndarray:
    seq = np.asarray(sequence, dtype=np.uint8)
    if seq.size != model.sequence_length:
        raise ValueError(f"expected {model.sequence_length} bits, got {seq.size}")
    if model.forced_ones == 0 or not model.is_tampered(sequence_index):
        return seq
    out = seq.copy()
    out[: model.forced_ones] = 1
    return out


def apply_bias_rows(rows: np.ndarray, model: BiasModel, first_index: int) -> np.ndarray:
    """Vectorised :func:`apply_bias` over a (sequences, n) matrix, in place."""
    if model.forced_ones == 0 or rows.shape[0] == 0:
        return rows
    idx = first_index + np.arange(rows.shape[0])
    hit = idx % model.tamper_period == 0
    rows[hit, : model.forced_ones] = 1
    return rows
