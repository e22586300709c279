"""SimHash fingerprints and a bucketed index over embedded sentences.

Fingerprints are ``bits`` random-hyperplane sign bits packed into an int.
Queries probe every bucket within a Hamming radius of the query's own
fingerprint.
"""

from __future__ import annotations

import base64
import hashlib
import json
from itertools import combinations
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .embedding import EmbeddingError, Provider, embed_all, row_norms

VERSION = 1
MAX_BITS = 64


class IndexFormatError(ValueError):
    pass


def hyperplanes(seed: int, bits: int, dim: int) -> np.ndarray:
    """``bits`` x ``dim`` standard-normal hyperplanes, a pure function of its arguments."""
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    return rng.standard_normal((bits, dim))


def _project(planes: np.ndarray, vectors: np.ndarray, chunk: int = 1024) -> np.ndarray:
    # elementwise product + sum keeps each dot product independent of batch
    # shape, so a query and an identical stored vector get identical bits
    out = np.empty((len(vectors), len(planes)))
    for s in range(0, len(vectors), chunk):
        out[s:s + chunk] = (vectors[s:s + chunk, None, :] * planes[None, :, :]).sum(axis=2)
    return out


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack rows of 0/1 bits (bit i -> 2**i) into uint64 keys."""
    weights = np.left_shift(np.uint64(1), np.arange(bits.shape[-1], dtype=np.uint64))
    return (bits.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64)


@dataclass
class LshIndex:
    bits: int
    seed: int
    dim: int
    texts: list[str]
    programs: list[str]
    vectors: np.ndarray
    planes: np.ndarray = field(init=False, repr=False)
    keys: np.ndarray = field(init=False, repr=False)
    buckets: dict[int, np.ndarray] = field(init=False, repr=False)
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must be in [0, {MAX_BITS}]")
        self.vectors = np.asarray(self.vectors, dtype=float).reshape(len(self.texts), self.dim)
        self.vectors.flags.writeable = False
        self.norms = row_norms(self.vectors)
        self.planes = hyperplanes(self.seed, self.bits, self.dim)
        self.keys = _pack(_project(self.planes, self.vectors) >= 0)
        order = np.argsort(self.keys, kind="stable")
        uniq, starts = np.unique(self.keys[order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        self.buckets = {int(k): order[s:e] for k, s, e in zip(uniq, starts, bounds)}

    def __len__(self) -> int:
        return len(self.texts)

    @property
    def entries(self):
        return [(i, t, p, self.vectors[i]) for i, (t, p) in enumerate(zip(self.texts, self.programs))]

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: index has d={self.dim}, got {v.shape}")
        return v

    def fingerprint(self, v) -> np.ndarray:
        """Sign bits of the hyperplane projections; ``sgn(0)`` counts as 1."""
        return (_project(self.planes, self._check(v)[None, :])[0] >= 0).astype(np.uint8)

    def key(self, v) -> int:
        return int(_pack(self.fingerprint(v)))

    def query(self, v, radius: int) -> np.ndarray:
        """Sorted ids of every entry whose fingerprint is within ``radius`` bit flips."""
        if radius < 0:
            raise ValueError("radius must be non-negative")
        q = self.key(v)
        radius = min(radius, self.bits)
        n_probes = sum(comb(self.bits, r) for r in range(radius + 1))
        if n_probes > len(self.buckets):
            # cheaper to scan every stored key than to enumerate the ball
            near = np.bitwise_count(self.keys ^ np.uint64(q)) <= radius
            return np.nonzero(near)[0]
        hits = [self.buckets[k] for k in _hamming_ball(q, self.bits, radius) if k in self.buckets]
        if not hits:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(hits))


def _hamming_ball(key: int, bits: int, radius: int):
    for r in range(radius + 1):
        for flips in combinations(range(bits), r):
            k = key
            for b in flips:
                k ^= 1 << b
            yield k


def fingerprint(index: LshIndex, v) -> np.ndarray:
    return index.fingerprint(v)


def query(index: LshIndex, v, radius: int) -> np.ndarray:
    return index.query(v, radius)


def build_index(entries: Sequence, provider: Provider, bits: int = 16, seed: int = 0) -> LshIndex:
    """Embed each sentence once and bucket it by fingerprint; ids follow input order."""
    if not entries:
        raise ValueError("cannot build an index over no entries")
    vectors = embed_all(provider, entries)
    return LshIndex(bits, seed, provider.dim,
                    [e.text for e in entries], [e.program for e in entries], vectors)


# ---------------------------------------------------------------------------
# persistence: a JSON header line, then one JSON line per entry with the
# vector as base64 little-endian float64 (bit-exact).


def _entry_lines(index: LshIndex) -> list[bytes]:
    lines = []
    for i, (t, p) in enumerate(zip(index.texts, index.programs)):
        vec = base64.b64encode(index.vectors[i].astype("<f8").tobytes()).decode("ascii")
        rec = {"id": i, "text": t, "program": p, "vector": vec}
        lines.append(json.dumps(rec, ensure_ascii=False).encode("utf-8") + b"\n")
    return lines


def save_index(index: LshIndex, path) -> str:
    """Write ``index`` to ``path`` and return the payload checksum."""
    body = _entry_lines(index)
    checksum = hashlib.sha256(b"".join(body)).hexdigest()
    header = {"version": VERSION, "bits": index.bits, "seed": index.seed, "dim": index.dim,
              "count": len(index), "checksum": checksum}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.writelines(body)
    return checksum


def load_index(path) -> LshIndex:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(header_line)
    except ValueError:
        raise IndexFormatError(f"{path}: unreadable header") from None
    if header.get("version") != VERSION:
        raise IndexFormatError(f"{path}: unsupported index version {header.get('version')!r}")
    if hashlib.sha256(body).hexdigest() != header.get("checksum"):
        raise IndexFormatError(f"{path}: checksum mismatch (corrupted or truncated file)")
    dim = header["dim"]
    texts, programs, rows = [], [], []
    for i, line in enumerate(body.splitlines()):
        rec = json.loads(line)
        if rec["id"] != i:
            raise IndexFormatError(f"{path}: entry ids out of order at {i}")
        texts.append(rec["text"])
        programs.append(rec["program"])
        rows.append(np.frombuffer(base64.b64decode(rec["vector"]), dtype="<f8").astype(float))
    if len(texts) != header["count"]:
        raise IndexFormatError(f"{path}: expected {header['count']} entries, found {len(texts)}")
    vectors = np.stack(rows) if rows else np.zeros((0, dim))
    return LshIndex(header["bits"], header["seed"], dim, texts, programs, vectors)


__all__ = ["LshIndex", "IndexFormatError", "EmbeddingError", "build_index", "fingerprint",
           "hyperplanes", "load_index", "query", "save_index"]
