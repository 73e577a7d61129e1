"""Dense text embeddings through a remote endpoint or a deterministic hashing fallback."""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import httpx
import numpy as np

DEFAULT_MODEL_ID = "all-MiniLM-L6-v2"
DEFAULT_DIM = 384

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


class EmbeddingError(Exception):
    pass


@dataclass
class EmbeddingMatrix:
    values: np.ndarray  # (n, dim) float64
    doc_ids: list
    model_id: str

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.doc_ids):
            raise EmbeddingError("embedding rows and doc_ids are misaligned")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise EmbeddingError("doc_ids must be unique")

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _signed_bucket(feature: str, dim: int, seed: int) -> tuple[int, float]:
    h = hashlib.blake2b(f"{seed}\x1f{feature}".encode("utf-8"), digest_size=8).digest()
    v = int.from_bytes(h, "little")
    return (v >> 1) % dim, (1.0 if v & 1 else -1.0)


def _features(text: str) -> list[str]:
    tokens = [t.lower() for t in _WORD.findall(text)]
    # immediate repeats carry no extra signal ("solar solar" == "solar")
    collapsed = [t for i, t in enumerate(tokens) if i == 0 or t != tokens[i - 1]]
    return collapsed + [f"{a} {b}" for a, b in zip(collapsed, collapsed[1:])]


def fallback_embed(text: str, dim: int = DEFAULT_DIM, seed: int = 0) -> np.ndarray:
    """Feature-hashed unigram+bigram vector, L2-normalized.

    The bucket and sign come from a keyed BLAKE2b over the UTF-8 feature, so
    results do not depend on the interpreter's string hash.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    v = np.zeros(dim)
    for feat in _features(text):
        idx, sign = _signed_bucket(feat, dim, seed)
        v[idx] += sign
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise EmbeddingError(f"text has no tokens to embed: {text[:40]!r}")
    return v / norm


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine distance of a zero vector")
    d = 1.0 - float(np.dot(a, b)) / (na * nb)
    return min(2.0, max(0.0, d))


class HashingProvider:
    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0, model_id: Optional[str] = None):
        self.dim = dim
        self.seed = seed
        self.model_id = model_id or f"feature-hash-{dim}-s{seed}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack([fallback_embed(t, self.dim, self.seed) for t in texts])


class RemoteProvider:
    """POST {model, input: [...]} -> {data: [{embedding: [...]}, ...]}."""

    def __init__(self, endpoint: str, model_id: str = DEFAULT_MODEL_ID, dim: int = DEFAULT_DIM,
                 timeout: float = 60.0, client: Optional[httpx.Client] = None, token: Optional[str] = None):
        self.endpoint = endpoint
        self.model_id = model_id
        self.dim = dim
        self.timeout = timeout
        self.client = client or httpx.Client(timeout=timeout)
        self.token = token

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = self.client.post(self.endpoint, json={"model": self.model_id, "input": list(texts)},
                                    headers=headers)
            resp.raise_for_status()
            data = resp.json()["data"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise EmbeddingError(f"embedding request failed: {exc}") from exc
        if len(data) != len(texts):
            raise EmbeddingError(f"endpoint returned {len(data)} vectors for {len(texts)} texts")
        rows = sorted(data, key=lambda d: d.get("index", 0)) if all("index" in d for d in data) else data
        out = np.asarray([d["embedding"] for d in rows], dtype=np.float64)
        if out.shape[1] != self.dim:
            raise EmbeddingError(f"endpoint returned dim {out.shape[1]}, configured {self.dim}")
        return out


class VectorCache:
    """float32 vectors on disk keyed by (model_id, text) hash."""

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()
        self.hits = 0

    def _path(self, model_id: str, text: str) -> Path:
        h = hashlib.sha256(f"{model_id}\x00{text}".encode("utf-8")).hexdigest()
        return self.root / h[:2] / f"{h}.f32"

    def get(self, model_id: str, text: str, dim: int) -> Optional[np.ndarray]:
        p = self._path(model_id, text)
        if not p.is_file():
            return None
        v = np.fromfile(p, dtype="<f4")
        if v.shape[0] != dim:
            return None
        self.hits += 1
        return v.astype(np.float64)

    def put(self, model_id: str, text: str, vec: np.ndarray) -> None:
        p = self._path(model_id, text)
        with self._lock:
            p.parent.mkdir(parents=True, exist_ok=True)
            np.asarray(vec, dtype="<f4").tofile(p)


def embed_batch(texts: Sequence[str], provider, batch_size: int = 32, cache: Optional[VectorCache] = None,
                doc_ids: Optional[Sequence[str]] = None, normalize: bool = True) -> EmbeddingMatrix:
    """Embed ``texts`` in order, consulting and filling ``cache``.

    Values pass through float32 whether or not they came from the cache, so a
    warm and a cold run return bit-identical matrices.
    """
    for i, t in enumerate(texts):
        if not t or not t.strip():
            raise EmbeddingError(f"text {i} is empty")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(texts)
    rows: list[Optional[np.ndarray]] = [None] * n
    todo = []
    for i, t in enumerate(texts):
        hit = cache.get(provider.model_id, t, provider.dim) if cache else None
        if hit is not None:
            rows[i] = hit
        else:
            todo.append(i)
    # duplicate texts in one batch are sent once
    unique = list(dict.fromkeys(texts[i] for i in todo))
    fresh = {}
    for start in range(0, len(unique), batch_size):
        chunk = unique[start:start + batch_size]
        vecs = np.asarray(provider.embed(chunk), dtype=np.float64)
        if vecs.shape != (len(chunk), provider.dim):
            raise EmbeddingError(f"provider returned shape {vecs.shape}, expected ({len(chunk)}, {provider.dim})")
        for t, v in zip(chunk, vecs):
            if normalize:
                nv = np.linalg.norm(v)
                if nv == 0:
                    raise EmbeddingError("provider returned a zero vector")
                v = v / nv
            v32 = v.astype("<f4")
            fresh[t] = v32.astype(np.float64)
            if cache:
                cache.put(provider.model_id, t, v32)
    for i in todo:
        rows[i] = fresh[texts[i]]
    values = np.vstack(rows) if n else np.zeros((0, provider.dim))
    ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(n)]
    return EmbeddingMatrix(values, ids, provider.model_id)
