"""Chunk embeddings, an exact in-memory vector index and top-k cosine search."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

from autodsm._http import BackendError, auth_headers, post_json
from autodsm.corpus import Chunk

log = logging.getLogger(__name__)

NGRAM = 3


class RetrievalError(Exception):
    pass


class Embedder(Protocol):
    embedder_id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def _as_vector(v: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(-1)


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise RetrievalError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        raise RetrievalError("cosine similarity undefined for a zero vector")
    sim = float((a * b).sum()) / (na * nb)
    return max(-1.0, min(1.0, sim))


def _ngrams(text: str) -> list[str]:
    if len(text) <= NGRAM:
        return [text]
    return [text[i : i + NGRAM] for i in range(len(text) - NGRAM + 1)]


def offline_embed(text: str, dimension: int = 256) -> np.ndarray:
    """Deterministic signed feature-hashing of lowercased character trigrams.

    Each trigram picks a bucket and a sign from its BLAKE2b digest; the bucket
    counts are scaled to unit length. Empty text (or a signature that cancels
    to zero) maps to the first basis vector.
    """
    if dimension < 8:
        raise ValueError(f"dimension must be >= 8, got {dimension}")
    vec = np.zeros(dimension, dtype=np.float64)
    lowered = text.lower()
    if lowered:
        for gram in _ngrams(lowered):
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "little")
            bucket = (h >> 1) % dimension
            vec[bucket] += -1.0 if h & 1 else 1.0
    norm = float(np.sqrt((vec * vec).sum()))
    if norm == 0.0:
        vec[:] = 0.0
        vec[0] = 1.0
        return vec
    return vec / norm


class OfflineEmbedder:
    """Network-free embedder built on :func:`offline_embed`."""

    def __init__(self, dimension: int = 256):
        if dimension < 8:
            raise ValueError(f"dimension must be >= 8, got {dimension}")
        self.dimension = dimension
        self.embedder_id = f"offline-trigram-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        return offline_embed(text, self.dimension)


class RemoteEmbedder:
    """Client for an OpenAI-style ``/embeddings`` endpoint.

    Vectors are memoised per text for the lifetime of the object so repeated
    texts embed identically within one run.
    """

    def __init__(
        self,
        model: str = "text-embedding-ada-002",
        base_url: str = "https://api.openai.com/v1",
        api_key: str | None = None,
        dimension: int | None = None,
        batch_size: int = 64,
        retries: int = 3,
        backoff: float = 1.0,
        client: httpx.Client | None = None,
    ):
        self.model = model
        self.url = base_url.rstrip("/") + "/embeddings"
        self._api_key = api_key if api_key is not None else os.environ.get("DSM_API_KEY")
        self.dimension = dimension or 0
        self.embedder_id = f"remote:{model}"
        self.batch_size = batch_size
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=60.0)
        self._memo: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"RemoteEmbedder(model={self.model!r}, url={self.url!r})"

    def _request(self, texts: list[str]) -> list[np.ndarray]:
        body = post_json(
            self._client,
            self.url,
            {"model": self.model, "input": texts},
            auth_headers(self._api_key),
            retries=self.retries,
            backoff=self.backoff,
        )
        try:
            data = sorted(body["data"], key=lambda d: d.get("index", 0))
            vectors = [_as_vector(d["embedding"]) for d in data]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: missing {exc}") from None
        if len(vectors) != len(texts):
            raise BackendError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        for v in vectors:
            if not self.dimension:
                self.dimension = int(v.shape[0])
            if v.shape[0] != self.dimension:
                raise BackendError(f"embedding has dimension {v.shape[0]}, expected {self.dimension}")
        return vectors

    def prefetch(self, texts: Sequence[str]) -> None:
        pending = list(dict.fromkeys(t for t in texts if t not in self._memo))
        for i in range(0, len(pending), self.batch_size):
            batch = pending[i : i + self.batch_size]
            vectors = self._request(batch)
            with self._lock:
                for t, v in zip(batch, vectors):
                    self._memo.setdefault(t, v)

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._memo.get(text)
        if hit is not None:
            return hit
        (vec,) = self._request([text])
        with self._lock:
            return self._memo.setdefault(text, vec)


@dataclass(frozen=True)
class VectorIndex:
    entries: tuple[tuple[Chunk, np.ndarray], ...]
    embedder_id: str
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)
    _norms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.entries:
            raise RetrievalError("vector index is empty")
        dims = {v.shape[0] for _, v in self.entries}
        if len(dims) != 1:
            raise RetrievalError(f"mixed embedding dimensions in index: {sorted(dims)}")
        matrix = np.vstack([v for _, v in self.entries]).astype(np.float64)
        matrix.setflags(write=False)
        norms = np.sqrt((matrix * matrix).sum(axis=1))
        if np.any(norms == 0.0):
            bad = self.entries[int(np.argmin(norms))][0]
            raise RetrievalError(f"zero embedding for chunk ({bad.source_id}, {bad.ordinal})")
        object.__setattr__(self, "_matrix", matrix)
        object.__setattr__(self, "_norms", norms)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dimension(self) -> int:
        return int(self._matrix.shape[1])

    @property
    def chunks(self) -> list[Chunk]:
        return [c for c, _ in self.entries]

    def similarities(self, query_vector: Sequence[float] | np.ndarray) -> np.ndarray:
        q = _as_vector(query_vector)
        if q.shape[0] != self.dimension:
            raise RetrievalError(f"dimension mismatch: query {q.shape[0]} vs index {self.dimension}")
        qn = float(np.sqrt((q * q).sum()))
        if qn == 0.0:
            raise RetrievalError("query embedding is a zero vector")
        # row-wise reduction keeps identical rows bit-identical, which the tie-break relies on
        return (self._matrix * q).sum(axis=1) / (self._norms * qn)

    def search(self, query_vector: Sequence[float] | np.ndarray, k: int) -> list[tuple[Chunk, float]]:
        if k <= 0:
            raise ValueError(f"k must be positive, got {k}")
        sims = self.similarities(query_vector)
        order = sorted(
            range(len(self.entries)),
            key=lambda i: (-sims[i], self.entries[i][0].source_id, self.entries[i][0].ordinal),
        )
        return [(self.entries[i][0], float(sims[i])) for i in order[:k]]


def build_index(chunks: Sequence[Chunk], embedder: Embedder, max_workers: int = 1) -> VectorIndex:
    if not chunks:
        raise RetrievalError("cannot build an index from zero chunks")
    prefetch = getattr(embedder, "prefetch", None)
    if prefetch is not None:
        try:
            prefetch([c.text for c in chunks])
        except BackendError as exc:
            # fall through so the failing chunk gets named below
            log.warning("batch embedding failed (%s); embedding chunk by chunk", exc)

    def embed_one(chunk: Chunk) -> np.ndarray:
        try:
            vec = _as_vector(embedder.embed(chunk.text))
        except Exception as exc:
            raise RetrievalError(
                f"embedding failed for chunk ({chunk.source_id}, {chunk.ordinal}): {exc}"
            ) from exc
        if vec.shape[0] != embedder.dimension:
            raise RetrievalError(
                f"chunk ({chunk.source_id}, {chunk.ordinal}): embedder returned "
                f"{vec.shape[0]} values, expected {embedder.dimension}"
            )
        return vec

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            vectors = list(pool.map(embed_one, chunks))
    else:
        vectors = [embed_one(c) for c in chunks]
    return VectorIndex(entries=tuple(zip(chunks, vectors)), embedder_id=embedder.embedder_id)


def top_k(index: VectorIndex, query: str, k: int, embedder: Embedder) -> list[Chunk]:
    """The ``min(k, len(index))`` chunks most similar to ``query``.

    Ties are broken by ascending ``(source_id, ordinal)``.
    """
    if embedder.embedder_id != index.embedder_id:
        raise RetrievalError(
            f"embedder {embedder.embedder_id!r} does not match index built with {index.embedder_id!r}"
        )
    return [c for c, _ in index.search(embedder.embed(query), k)]


def save_index(index: VectorIndex, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"embedder_id": index.embedder_id, "dimension": index.dimension}) + "\n")
        for chunk, vec in index.entries:
            record = {
                "source_id": chunk.source_id,
                "ordinal": chunk.ordinal,
                "start_offset": chunk.start_offset,
                "text": chunk.text,
                "vector": vec.tolist(),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_index(path: str | Path) -> VectorIndex:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        entries = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            chunk = Chunk(rec["source_id"], rec["ordinal"], rec["text"], rec["start_offset"])
            entries.append((chunk, _as_vector(rec["vector"])))
    return VectorIndex(entries=tuple(entries), embedder_id=header["embedder_id"])
