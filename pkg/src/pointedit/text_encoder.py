"""Instruction-to-embedding interface with a deterministic hashed default.

The default encoder lowercases, strips punctuation, and hashes each token
into `dim` buckets with 4 independent keyed hashes and signed contributions,
then L2-normalizes. It is dependency-free and deterministic across
processes. Real embeddings produced offline can be served bit-exactly from
an EMB1 file via :class:`PrecomputedEncoder`, which falls back to the hashed
encoder on misses.
"""

from __future__ import annotations

import hashlib
import logging
import string
import struct
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

EMB_MAGIC = b"EMB1"
DEFAULT_DIM = 64
_N_HASHES = 4
_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


class EncoderError(ValueError):
    """Empty input or malformed embedding file."""


def _tokenize(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


class HashedTextEncoder:
    """Hashed bag-of-tokens encoder producing unit-norm vectors."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise EncoderError("embedding dimension must be >= 2")
        self.dim = dim

    def encode(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EncoderError("cannot encode empty text")
        tokens = _tokenize(text)
        if not tokens:
            tokens = [text.strip().lower()]  # all-punctuation input
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            for k in range(_N_HASHES):
                digest = hashlib.blake2b(token.encode("utf-8"),
                                         digest_size=8, salt=bytes([k])).digest()
                value = int.from_bytes(digest, "little")
                bucket = value % self.dim
                sign = 1.0 if (value >> 32) & 1 else -1.0
                vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # perfectly cancelling hashes; fall back to a basis vector
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


class PrecomputedEncoder:
    """Serves stored instruction embeddings, hashed fallback for misses."""

    def __init__(self, path: str | Path, fallback: HashedTextEncoder | None = None):
        self.table = read_embeddings(path)
        dims = {v.shape[0] for v in self.table.values()}
        if len(dims) > 1:
            raise EncoderError(f"mixed embedding dimensions in file: {sorted(dims)}")
        self.dim = dims.pop() if dims else (fallback.dim if fallback else DEFAULT_DIM)
        self.fallback = fallback or HashedTextEncoder(self.dim)
        if self.fallback.dim != self.dim:
            raise EncoderError(f"fallback dim {self.fallback.dim} != file dim {self.dim}")

    def encode(self, text: str) -> np.ndarray:
        if text in self.table:
            return self.table[text].astype(np.float64)
        log.warning("no precomputed embedding for %r; using hashed fallback", text)
        return self.fallback.encode(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def write_embeddings(table: dict[str, np.ndarray], path: str | Path) -> None:
    """EMB1 file: magic, u32 dim, then (u16 strlen, utf-8, dim x f32le) records."""
    dims = {np.asarray(v).shape[0] for v in table.values()}
    if len(dims) > 1:
        raise EncoderError(f"mixed embedding dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else DEFAULT_DIM
    with open(Path(path), "wb") as f:
        f.write(EMB_MAGIC)
        f.write(struct.pack("<I", dim))
        for text, vec in table.items():
            raw = text.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(np.asarray(vec, dtype="<f4").tobytes())


def read_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != EMB_MAGIC:
        raise EncoderError("bad embedding file magic")
    (dim,) = struct.unpack_from("<I", blob, 4)
    pos = 8
    table: dict[str, np.ndarray] = {}
    while pos < len(blob):
        if pos + 2 > len(blob):
            raise EncoderError("truncated embedding record header")
        (slen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        end = pos + slen + dim * 4
        if end > len(blob):
            raise EncoderError("truncated embedding record")
        try:
            text = blob[pos:pos + slen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncoderError(f"corrupt embedding record at byte {pos}") from exc
        vec = np.frombuffer(blob[pos + slen:end], dtype="<f4").copy()
        table[text] = vec
        pos = end
    return table
