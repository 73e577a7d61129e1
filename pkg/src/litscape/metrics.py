"""Quality measures for projections and clusterings."""

from __future__ import annotations

import numpy as np
from scipy.special import comb


def _ranks(d: np.ndarray) -> np.ndarray:
    """Rank of each column within its row (self excluded), 1-based, ties by index."""
    n = d.shape[0]
    d = d.copy()
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(1, n + 1)[None, :]
    return ranks


def _sqdist(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    return d


def trustworthiness(high: np.ndarray, low: np.ndarray, k: int = 10, metric: str = "euclidean") -> float:
    """1 minus the rank penalty for low-dimensional neighbours that are far in the original space."""
    n = len(high)
    if not 0 < k < n / 2:
        raise ValueError(f"k must satisfy 0 < k < n/2 (n={n}, k={k})")
    if metric == "cosine":
        h = np.asarray(high, dtype=np.float64)
        h = h / np.linalg.norm(h, axis=1, keepdims=True)
        dh = _sqdist(h)
    else:
        dh = _sqdist(high)
    rank_high = _ranks(dh)
    dl = _sqdist(low)
    np.fill_diagonal(dl, np.inf)
    nn_low = np.argsort(dl, axis=1, kind="stable")[:, :k]
    penalty = rank_high[np.arange(n)[:, None], nn_low] - k
    t = np.clip(penalty, 0, None).sum()
    return float(1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * t)


def adjusted_rand_index(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label arrays differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(len(a), 2)
    expected = sum_a * sum_b / total if total else 0.0
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return float((sum_cells - expected) / (top - expected))


def knn_overlap(x: np.ndarray, y: np.ndarray, k: int = 10) -> float:
    """Mean Jaccard overlap of the k-nearest-neighbour sets in two spaces."""
    dx = _sqdist(x)
    dy = _sqdist(y)
    np.fill_diagonal(dx, np.inf)
    np.fill_diagonal(dy, np.inf)
    nx = np.argsort(dx, axis=1, kind="stable")[:, :k]
    ny = np.argsort(dy, axis=1, kind="stable")[:, :k]
    scores = [len(set(p) & set(q)) / len(set(p) | set(q)) for p, q in zip(nx, ny)]
    return float(np.mean(scores))
