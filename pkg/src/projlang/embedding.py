"""Sentence embedding providers.

Every provider exposes ``dim``, ``mask_token`` and ``embed(tokens)``.  Three
are available:

* :class:`ReferenceProvider` -- deterministic seeded word vectors with mean
  pooling.  Words in the same synonym class share a vector and the mask
  token embeds as zeros.
* :class:`FileProvider` -- precomputed vectors keyed by the space-joined
  token sequence.
* :class:`ServiceProvider` -- line protocol client for an external
  embedding service (``HELLO``/``DIM d`` handshake, then ``EMBED``/``OK``).
"""

from __future__ import annotations

import hashlib
import logging
import os
import socket
import socketserver
import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .grammar import MASK

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "PROJLANG_EMBED_ENDPOINT"


class EmbeddingError(RuntimeError):
    pass


class Provider(Protocol):
    dim: int
    mask_token: str

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


def _check_tokens(tokens: Sequence[str]) -> tuple[str, ...]:
    tokens = tuple(tokens)
    if not tokens:
        raise EmbeddingError("cannot embed an empty token sequence")
    return tokens


def _class_seed(seed: int, class_id: str) -> list[int]:
    digest = hashlib.blake2b(class_id.encode("utf-8"), digest_size=8).digest()
    return [seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "little")]


class ReferenceProvider:
    """Seeded class vectors, mean pooled.

    Token vectors are summed in sorted class order, so any permutation of
    the input (and any same-class substitution) gives a bit-identical result.
    """

    def __init__(self, dim: int = 64, seed: int = 0,
                 synonym_lexicon: Optional[Mapping[str, str]] = None,
                 mask_token: str = MASK):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self.synonym_lexicon = dict(synonym_lexicon or {})
        self.mask_token = mask_token
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def class_id(self, token: str) -> str:
        return self.synonym_lexicon.get(token, token)

    def token_vector(self, token: str) -> np.ndarray:
        if token == self.mask_token:
            return np.zeros(self.dim)
        cid = self.class_id(token)
        vec = self._vectors.get(cid)
        if vec is None:
            vec = np.random.default_rng(_class_seed(self.seed, cid)).standard_normal(self.dim)
            vec.flags.writeable = False
            with self._lock:
                self._vectors[cid] = vec
        return vec

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        tokens = _check_tokens(tokens)
        # the mask sorts as "" so it lands first; its vector is zero anyway
        keys = sorted("" if t == self.mask_token else self.class_id(t) for t in tokens)
        stacked = np.stack([self.token_vector(t) if t else np.zeros(self.dim) for t in keys])
        return stacked.sum(axis=0) / len(keys)


class FileProvider:
    def __init__(self, table: Mapping[str, np.ndarray], dim: int, mask_token: str = MASK):
        self.table = dict(table)
        self.dim = dim
        self.mask_token = mask_token

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        key = " ".join(_check_tokens(tokens))
        try:
            return self.table[key]
        except KeyError:
            raise EmbeddingError(f"no embedding for: {key}") from None


def load_file_provider(path, mask_token: str = MASK) -> FileProvider:
    """Read ``dim <d>`` then ``<tokens>\\t<v1> ... <vd>`` lines."""
    table: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if dim is None:
                parts = line.split()
                if len(parts) != 2 or parts[0] != "dim" or not parts[1].isdigit() or int(parts[1]) < 1:
                    raise EmbeddingError(f"{path}:{lineno}: expected header 'dim <d>'")
                dim = int(parts[1])
                continue
            key, tab, values = line.partition("\t")
            if not tab:
                raise EmbeddingError(f"{path}:{lineno}: malformed line (missing tab)")
            try:
                vec = np.array([float(v) for v in values.split()])
            except ValueError:
                raise EmbeddingError(f"{path}:{lineno}: malformed vector") from None
            if len(vec) != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: inconsistent dimension {len(vec)} (expected {dim})")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"{path}:{lineno}: non-finite value")
            table[" ".join(key.split())] = vec
    if dim is None:
        raise EmbeddingError(f"{path}: empty embedding file")
    return FileProvider(table, dim, mask_token)


def write_embedding_file(path, rows: Mapping[str, np.ndarray]) -> None:
    rows = dict(rows)
    dims = {len(v) for v in rows.values()}
    if len(dims) != 1:
        raise EmbeddingError("rows must share one dimension")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {dims.pop()}\n")
        for key, vec in rows.items():
            fh.write(key + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")


# ---------------------------------------------------------------------------
# service protocol


def _parse_endpoint(endpoint: str):
    if endpoint.startswith("unix:"):
        return socket.AF_UNIX, endpoint[len("unix:"):]
    host, sep, port = endpoint.removeprefix("tcp://").rpartition(":")
    if not sep or not port.isdigit():
        raise EmbeddingError(f"bad endpoint {endpoint!r}; expected host:port or unix:/path")
    return socket.AF_INET, (host or "127.0.0.1", int(port))


class ServiceProvider:
    """Client for the line-oriented embedding service.

    One request is in flight per connection; open several providers for
    parallel use.
    """

    def __init__(self, endpoint: str, mask_token: str = MASK, timeout: float = 30.0):
        self.endpoint = endpoint
        self.mask_token = mask_token
        family, addr = _parse_endpoint(endpoint)
        try:
            self._sock = socket.socket(family, socket.SOCK_STREAM)
            self._sock.settimeout(timeout)
            self._sock.connect(addr)
            self._fh = self._sock.makefile("rwb")
        except OSError as e:
            raise EmbeddingError(f"transport failure connecting to {endpoint}: {e}") from e
        self._lock = threading.Lock()
        reply = self._request("HELLO")
        parts = reply.split()
        if len(parts) != 2 or parts[0] != "DIM" or not parts[1].isdigit():
            raise EmbeddingError(f"bad handshake reply: {reply!r}")
        self.dim = int(parts[1])

    def _request(self, line: str) -> str:
        with self._lock:
            try:
                self._fh.write(line.encode("utf-8") + b"\n")
                self._fh.flush()
                reply = self._fh.readline()
            except OSError as e:
                raise EmbeddingError(f"transport failure: {e}") from e
        if not reply:
            raise EmbeddingError("transport failure: connection closed")
        return reply.decode("utf-8").rstrip("\n")

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        key = " ".join(_check_tokens(tokens))
        reply = self._request(f"EMBED {key}")
        if reply.startswith("ERR"):
            raise EmbeddingError(f"service error for {key!r}: {reply[3:].strip()}")
        if not reply.startswith("OK"):
            raise EmbeddingError(f"bad service reply: {reply!r}")
        vec = np.array([float(v) for v in reply[2:].split()])
        if len(vec) != self.dim:
            raise EmbeddingError(f"dimension mismatch: got {len(vec)}, expected {self.dim}")
        return vec

    def close(self) -> None:
        try:
            self._fh.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        provider = self.server.provider
        for raw in self.rfile:
            line = raw.decode("utf-8").rstrip("\n")
            if line == "HELLO":
                out = f"DIM {provider.dim}"
            elif line.startswith("EMBED "):
                try:
                    vec = provider.embed(line[6:].split())
                    out = "OK " + " ".join(repr(float(x)) for x in vec)
                except Exception as e:  # reported to the client, never fatal
                    out = f"ERR {e}"
            else:
                out = f"ERR unknown command {line.split(' ', 1)[0]!r}"
            self.wfile.write(out.encode("utf-8") + b"\n")
            self.wfile.flush()


class EmbeddingServer(socketserver.ThreadingTCPServer):
    """Serve any provider over the line protocol (tests, local tooling)."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, provider: Provider, host: str = "127.0.0.1", port: int = 0):
        self.provider = provider
        super().__init__((host, port), _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "EmbeddingServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        if getattr(self, "_thread", None) is not None:
            self.shutdown()
        self.server_close()


# ---------------------------------------------------------------------------
# distances


def cosine_distance_flagged(u, v) -> tuple[float, bool]:
    """Cosine distance plus a flag set when either input has zero norm.

    Zero-norm inputs are defined to be at distance 1.0.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = row_norms(np.stack([u, v]))
    if nu == 0.0 or nv == 0.0:
        logger.debug("zero-norm vector in cosine distance")
        return 1.0, True
    if np.array_equal(u, v):
        return 0.0, False
    d = 1.0 - float(_dots(v[None, :], u)[0]) / (nu * nv)
    return float(min(2.0, max(0.0, d))), False


def cosine_distance(u, v) -> float:
    return cosine_distance_flagged(u, v)[0]


# every dot product goes through einsum: a row's result does not depend on
# the rest of the batch, so scalar and batched distances agree bit for bit
def _dots(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.einsum("ij,j->i", matrix, q)


def row_norms(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    return np.sqrt(np.einsum("ij,ij->i", matrix, matrix))


def cosine_distances(q: np.ndarray, matrix: np.ndarray, norms: Optional[np.ndarray] = None,
                     rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise cosine distance between ``q`` and each row of ``matrix``.

    Matches :func:`cosine_distance` for every row, including the zero-norm
    and exact-equality conventions.  ``norms`` may carry precomputed
    :func:`row_norms` of the full matrix and ``rows`` restricts scoring to a
    subset of row ids (in that order).
    """
    q = np.asarray(q, dtype=float)
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: {q.shape} vs {matrix.shape}")
    if rows is not None:
        matrix = matrix[rows]
        norms = None if norms is None else norms[rows]
    if norms is None:
        norms = row_norms(matrix)
    nq = row_norms(q[None, :])[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 1.0 - _dots(matrix, q) / (norms * nq)
    np.clip(d, 0.0, 2.0, out=d)
    near = np.nonzero(d < 1e-6)[0]  # identical rows can only land here
    if len(near):
        d[near[np.all(matrix[near] == q, axis=1)]] = 0.0
    zero = norms == 0.0
    if nq == 0.0:
        zero[:] = True
    d[zero] = 1.0
    return d


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EmbeddingProviderConfig:
    kind: str = "reference"
    dim: int = 64
    seed: int = 0
    synonym_lexicon: dict[str, str] = field(default_factory=dict)
    path: Optional[str] = None
    endpoint: Optional[str] = None
    mask_token: str = MASK

    def build(self) -> Provider:
        if self.kind == "reference":
            return ReferenceProvider(self.dim, self.seed, self.synonym_lexicon, self.mask_token)
        if self.kind == "file":
            if not self.path:
                raise EmbeddingError("file provider needs a path")
            return load_file_provider(self.path, self.mask_token)
        if self.kind == "service":
            endpoint = os.environ.get(ENDPOINT_ENV) or self.endpoint
            if not endpoint:
                raise EmbeddingError(f"service provider needs an endpoint (or ${ENDPOINT_ENV})")
            return ServiceProvider(endpoint, self.mask_token)
        raise EmbeddingError(f"unknown provider kind {self.kind!r}")


def load_synonyms(path) -> dict[str, str]:
    """``word class`` per line; ``#`` comments.  ``walk go`` maps walk onto go."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EmbeddingError(f"{path}:{lineno}: expected 'word class'")
            out[parts[0].lower()] = parts[1].lower()
    return out


def parse_provider_spec(spec: str, seed: int = 0) -> EmbeddingProviderConfig:
    """Parse ``reference[:dim=64,seed=0,synonyms=PATH]``, ``file:PATH`` or ``service:HOST:PORT``."""
    kind, _, rest = spec.partition(":")
    if kind == "reference":
        cfg = EmbeddingProviderConfig(kind="reference", seed=seed)
        for item in filter(None, rest.split(",")):
            k, eq, v = item.partition("=")
            if not eq:
                raise EmbeddingError(f"bad reference option {item!r}")
            if k == "dim":
                cfg.dim = int(v)
            elif k == "seed":
                cfg.seed = int(v)
            elif k == "synonyms":
                cfg.synonym_lexicon = load_synonyms(v)
            else:
                raise EmbeddingError(f"unknown reference option {k!r}")
        return cfg
    if kind == "file":
        return EmbeddingProviderConfig(kind="file", path=rest)
    if kind == "service":
        return EmbeddingProviderConfig(kind="service", endpoint=rest or None)
    raise EmbeddingError(f"unknown embeddings kind {kind!r}")


def embed_all(provider: Provider, sentences) -> np.ndarray:
    """Stack embeddings for a list of token sequences or objects with ``tokens``."""
    rows = []
    for s in sentences:
        tokens = getattr(s, "tokens", s)
        try:
            rows.append(provider.embed(tokens))
        except EmbeddingError as e:
            raise EmbeddingError(f"failed to embed {' '.join(tokens)!r}: {e}") from e
    if not rows:
        return np.zeros((0, provider.dim))
    return np.stack(rows)
