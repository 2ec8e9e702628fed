r"""Binary index file.

All integers are little endian.

Header (48 bytes)::

    offset size  field
    0      7     magic b"ICDRRIX"
    7      1     format version (0x01)
    8      8     payload length in bytes (u64)
    16     32    SHA-256 of the payload

Payload::

    u32 doc_count, u32 vocab_size, u32 dim, u64 seed, u64 posting_count
    u32 digest_len, digest_len bytes    source corpus digest (ASCII hex)
    u32 codes_len,  codes_len bytes     doc codes, UTF-8, '\n' separated
    u32 vocab_len,  vocab_len bytes     vocabulary, UTF-8, '\n' separated, sorted
    doc_count     x u32                 document lengths
    vocab_size+1  x u64                 posting offsets
    posting_count x u32                 posting doc ids
    posting_count x u32                 posting term frequencies
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptIndex, VersionMismatch
from .index import InvertedIndex

MAGIC = b"ICDRRIX"
VERSION = 0x01
_HEADER = struct.Struct("<7sBQ32s")
_COUNTS = struct.Struct("<IIIQQ")
_LEN = struct.Struct("<I")


def _blob(data: bytes) -> bytes:
    return _LEN.pack(len(data)) + data


def encode_index(index: InvertedIndex) -> bytes:
    parts = [
        _COUNTS.pack(
            index.doc_count, len(index.vocabulary), index.dim, index.seed, len(index.posting_docs)
        ),
        _blob(index.source_digest.encode("ascii")),
        _blob("\n".join(index.codes).encode("utf-8")),
        _blob("\n".join(index.vocabulary).encode("utf-8")),
        index.doc_lengths.astype("<u4").tobytes(),
        index.posting_offsets.astype("<u8").tobytes(),
        index.posting_docs.astype("<u4").tobytes(),
        index.posting_tfs.astype("<u4").tobytes(),
    ]
    payload = b"".join(parts)
    header = _HEADER.pack(MAGIC, VERSION, len(payload), hashlib.sha256(payload).digest())
    return header + payload


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptIndex("payload ends early")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def blob(self) -> bytes:
        (n,) = self.unpack(_LEN)
        return self.take(n)

    def array(self, dtype: str, count: int) -> np.ndarray:
        width = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(width * count), dtype=dtype).astype(np.int64)


def decode_index(data: bytes) -> InvertedIndex:
    if len(data) < _HEADER.size:
        if not MAGIC.startswith(data[:7]):
            raise CorruptIndex("not an icdrr index file")
        raise CorruptIndex("file shorter than header")
    magic, version, length, checksum = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptIndex("not an icdrr index file (bad magic)")
    if version != VERSION:
        raise VersionMismatch(version, VERSION)
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise CorruptIndex(f"payload is {len(payload)} bytes, header says {length}")
    if hashlib.sha256(payload).digest() != checksum:
        raise CorruptIndex("payload checksum mismatch")

    r = _Reader(payload)
    doc_count, vocab_size, dim, seed, posting_count = r.unpack(_COUNTS)
    digest = r.blob().decode("ascii")
    codes = r.blob().decode("utf-8").split("\n")
    vocab_blob = r.blob().decode("utf-8")
    vocabulary = vocab_blob.split("\n") if vocab_blob else []
    if len(codes) != doc_count or len(vocabulary) != vocab_size:
        raise CorruptIndex("count fields disagree with payload")
    doc_lengths = r.array("<u4", doc_count)
    offsets = r.array("<u8", vocab_size + 1)
    docs = r.array("<u4", posting_count)
    tfs = r.array("<u4", posting_count)
    if r.pos != len(payload):
        raise CorruptIndex("trailing bytes after payload")
    return InvertedIndex(codes, doc_lengths, vocabulary, offsets, docs, tfs, dim=dim, seed=seed, source_digest=digest)


def save_index(index: InvertedIndex, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_index(index))
    os.replace(tmp, path)


def load_index(path) -> InvertedIndex:
    return decode_index(Path(path).read_bytes())
