"""UMAP from first principles.

Exact k-NN graph, fuzzy simplicial set, a/b curve fit and seeded SGD layout.
All randomness comes from SplitMix64 streams derived from the config seed,
one stream per epoch plus one for initialization, so layouts are
bit-reproducible for a fixed (matrix, config).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import curve_fit

log = logging.getLogger(__name__)

SIGMA_BOUNDS = (1e-5, 1e5)
SIGMA_ITERATIONS = 64
MAX_STEP = 4.0
_MASK64 = (1 << 64) - 1


class ManifoldError(Exception):
    pass


@dataclass
class ProjectionConfig:
    n_neighbors: int = 10
    n_components: int = 10
    min_dist: float = 0.0
    spread: float = 1.0
    metric: str = "cosine"
    seed: int = 42
    n_epochs: int = 500
    learning_rate: float = 1.0
    negative_sample_rate: int = 5

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ManifoldError("n_neighbors must be >= 2")
        if self.n_components < 1:
            raise ManifoldError("n_components must be >= 1")
        if self.min_dist < 0:
            raise ManifoldError("min_dist must be >= 0")
        if self.negative_sample_rate < 0:
            raise ManifoldError("negative_sample_rate must be >= 0")
        if self.metric not in ("cosine", "euclidean"):
            raise ManifoldError(f"unsupported metric {self.metric!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectionConfig":
        return cls(**d)


@dataclass
class NeighborGraph:
    indices: np.ndarray  # (n, k) int64
    distances: np.ndarray  # (n, k) float64, ascending per row


@dataclass
class FuzzySimplicialSet:
    weights: sp.csr_matrix
    rho: np.ndarray
    sigma: np.ndarray
    residuals: np.ndarray
    clamped: list = field(default_factory=list)


@dataclass
class Projection:
    coords: np.ndarray
    config: ProjectionConfig
    init: str = "spectral"
    clamped: list = field(default_factory=list)

    def snapshot(self) -> dict:
        return {"config": asdict(self.config), "init": self.init, "clamped_points": list(self.clamped)}


# ---------------------------------------------------------------------------
# random streams

def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def stream_seed(seed: int, stream: int) -> int:
    """Independent starting state for sub-stream ``stream`` of ``seed``."""
    _, a = splitmix64((seed * 0xD1B54A32D192ED03) & _MASK64)
    _, b = splitmix64((a ^ ((stream + 1) * 0xBF58476D1CE4E5B9)) & _MASK64)
    return b


def uniform_stream(seed: int, stream: int, size: int) -> np.ndarray:
    state = stream_seed(seed, stream)
    out = np.empty(size)
    for i in range(size):
        state, z = splitmix64(state)
        out[i] = (z >> 11) * (1.0 / (1 << 53))
    return out


_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@numba.njit(cache=True)
def _sm_next(state):
    state[0] = state[0] + _SM_GAMMA
    z = state[0]
    z = (z ^ (z >> _S30)) * _SM_M1
    z = (z ^ (z >> _S27)) * _SM_M2
    return z ^ (z >> _S31)


# ---------------------------------------------------------------------------
# neighbor graph

def pairwise_row(X: np.ndarray, i: int, metric: str) -> np.ndarray:
    if metric == "euclidean":
        return np.sqrt(((X - X[i]) ** 2).sum(axis=1))
    # X rows are unit vectors here; half squared chord == 1 - cos, exactly 0 for duplicates
    return np.clip(0.5 * ((X - X[i]) ** 2).sum(axis=1), 0.0, 2.0)


def _prepare(X: np.ndarray, metric: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise ManifoldError("cosine metric with a zero-norm row")
        X = X / norms[:, None]
    return X


def knn_graph(X, k: int, metric: str = "cosine") -> NeighborGraph:
    """Exact k nearest neighbors by full pairwise distances; ties go to the lower index."""
    X = _prepare(X, metric)
    n = X.shape[0]
    if not 1 <= k <= n - 1:
        raise ManifoldError(f"k={k} out of range for n={n}")
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for i in range(n):
        d = pairwise_row(X, i, metric)
        d[i] = np.inf
        order = np.argsort(d, kind="stable")[:k]
        idx[i] = order
        dist[i] = d[order]
    return NeighborGraph(idx, dist)


# ---------------------------------------------------------------------------
# fuzzy simplicial set

def _membership_sum(shifted: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return np.exp(-shifted / sigma[:, None]).sum(axis=1)


def smooth_knn_sigma(distances: np.ndarray, k: int):
    """Per-row rho and sigma with sum_j exp(-max(0, d_ij - rho_i)/sigma_i) = log2(k).

    Plain bisection over ``SIGMA_BOUNDS``; rows whose root lies outside the
    bounds come back clamped and flagged.
    """
    distances = np.asarray(distances, dtype=np.float64)
    n = distances.shape[0]
    target = np.log2(k)
    rho = distances[:, 0].copy()
    shifted = np.maximum(distances - rho[:, None], 0.0)
    lo = np.full(n, SIGMA_BOUNDS[0])
    hi = np.full(n, SIGMA_BOUNDS[1])
    for _ in range(SIGMA_ITERATIONS):
        mid = 0.5 * (lo + hi)
        too_big = _membership_sum(shifted, mid) > target
        hi = np.where(too_big, mid, hi)
        lo = np.where(too_big, lo, mid)
    sigma = 0.5 * (lo + hi)
    f_lo = _membership_sum(shifted, np.full(n, SIGMA_BOUNDS[0]))
    f_hi = _membership_sum(shifted, np.full(n, SIGMA_BOUNDS[1]))
    clamped = np.flatnonzero((f_lo > target) | (f_hi < target))
    sigma[f_lo > target] = SIGMA_BOUNDS[0]
    sigma[f_hi < target] = SIGMA_BOUNDS[1]
    residual = np.abs(_membership_sum(shifted, sigma) - target)
    return rho, sigma, residual, [int(i) for i in clamped]


def fuzzy_simplicial_set(graph: NeighborGraph, k: Optional[int] = None) -> FuzzySimplicialSet:
    """Symmetric fuzzy graph: directed memberships joined by the probabilistic t-conorm."""
    n, kk = graph.indices.shape
    k = kk if k is None else k
    rho, sigma, residual, clamped = smooth_knn_sigma(graph.distances[:, :k], k)
    shifted = np.maximum(graph.distances[:, :k] - rho[:, None], 0.0)
    w = np.exp(-shifted / sigma[:, None])
    rows = np.repeat(np.arange(n), k)
    cols = graph.indices[:, :k].ravel()
    vals = w.ravel()
    keep = rows != cols
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    # look up the reverse weight of every directed edge, then 1 - (1-a)(1-b);
    # the product commutes bitwise, so the result is exactly symmetric
    keys = rows * n + cols
    order = np.argsort(keys)
    skeys, svals = keys[order], vals[order]
    ai, aj = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    pair = np.unique(ai * n + aj)
    pi, pj = pair // n, pair % n

    def lookup(q):
        pos = np.searchsorted(skeys, q)
        pos = np.minimum(pos, len(skeys) - 1) if len(skeys) else pos
        found = (skeys[pos] == q) if len(skeys) else np.zeros(len(q), bool)
        return np.where(found, svals[pos] if len(skeys) else 0.0, 0.0)

    a = lookup(pi * n + pj)
    b = lookup(pj * n + pi)
    s = 1.0 - (1.0 - a) * (1.0 - b)
    W = sp.csr_matrix((s, (pi, pj)), shape=(n, n))
    W.eliminate_zeros()
    return FuzzySimplicialSet(W, rho, sigma, residual, clamped)


# ---------------------------------------------------------------------------
# low-dimensional curve

def _curve(x, a, b):
    return 1.0 / (1.0 + a * x ** (2 * b))


def fit_ab(min_dist: float = 0.0, spread: float = 1.0, grid: int = 300):
    """Least-squares (a, b) for 1/(1 + a d^(2b)) against the min_dist/spread envelope.

    Returns ``(a, b, residual)`` with ``residual`` the mean squared error on the grid.
    """
    if min_dist < 0 or spread <= 0:
        raise ManifoldError("need min_dist >= 0 and spread > 0")
    xv = np.linspace(0, spread * 3, grid)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    try:
        (a, b), _ = curve_fit(_curve, xv, yv, p0=(1.0, 1.0), bounds=([1e-6, 1e-6], [np.inf, np.inf]),
                              maxfev=5000)
    except RuntimeError as exc:
        raise ManifoldError(f"a/b fit did not converge: {exc}") from None
    residual = float(np.mean((_curve(xv, a, b) - yv) ** 2))
    return float(a), float(b), residual


# ---------------------------------------------------------------------------
# layout

def spectral_init(W: sp.spmatrix, dim: int):
    """Eigenvectors 1..dim of the symmetric normalized Laplacian, or None on failure."""
    n = W.shape[0]
    if dim + 1 >= n:
        return None
    deg = np.asarray(W.sum(axis=1)).ravel()
    inv_sqrt = np.zeros(n)
    inv_sqrt[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    A = W.toarray() * inv_sqrt[:, None] * inv_sqrt[None, :]
    L = np.eye(n) - A
    try:
        _, vecs = scipy.linalg.eigh(L, subset_by_index=[0, dim])
    except (np.linalg.LinAlgError, ValueError):
        return None
    coords = vecs[:, 1:dim + 1]
    if not np.all(np.isfinite(coords)):
        return None
    # eigenvector signs are arbitrary; pin them
    for c in range(coords.shape[1]):
        j = int(np.argmax(np.abs(coords[:, c])))
        if coords[j, c] < 0:
            coords[:, c] = -coords[:, c]
    return coords


@numba.njit(cache=True)
def _sgd(emb, head, tail, epochs_per_sample, a, b, n_epochs, lr, neg_rate, epoch_states):
    n_vertices, dim = emb.shape
    n_edges = head.shape[0]
    # a zero rate disables repulsion: the sample schedule is pushed past the last epoch
    eps_neg = epochs_per_sample / neg_rate if neg_rate > 0 else np.full(n_edges, np.inf)
    next_sample = epochs_per_sample.copy()
    next_neg = eps_neg.copy()
    state = np.zeros(1, dtype=np.uint64)
    for n in range(n_epochs):
        alpha = lr * (1.0 - n / n_epochs)
        state[0] = epoch_states[n]
        for i in range(n_edges):
            if next_sample[i] > n:
                continue
            j = head[i]
            k = tail[i]
            dist_sq = 0.0
            for d in range(dim):
                diff = emb[j, d] - emb[k, d]
                dist_sq += diff * diff
            if dist_sq > 0.0:
                coeff = -2.0 * a * b * dist_sq ** (b - 1.0)
                coeff /= a * dist_sq ** b + 1.0
            else:
                coeff = 0.0
            for d in range(dim):
                g = coeff * (emb[j, d] - emb[k, d])
                if g > 4.0:
                    g = 4.0
                elif g < -4.0:
                    g = -4.0
                emb[j, d] += g * alpha
                emb[k, d] -= g * alpha
            next_sample[i] += epochs_per_sample[i]
            n_neg = int((n - next_neg[i]) / eps_neg[i]) if neg_rate > 0 else 0
            for _ in range(n_neg):
                r = _sm_next(state)
                k = np.int64(r % np.uint64(n_vertices))
                if k == j:
                    continue
                dist_sq = 0.0
                for d in range(dim):
                    diff = emb[j, d] - emb[k, d]
                    dist_sq += diff * diff
                if dist_sq <= 0.0:
                    continue
                coeff = 2.0 * b / ((0.001 + dist_sq) * (a * dist_sq ** b + 1.0))
                for d in range(dim):
                    g = coeff * (emb[j, d] - emb[k, d])
                    if g > 4.0:
                        g = 4.0
                    elif g < -4.0:
                        g = -4.0
                    emb[j, d] += g * alpha
            if n_neg > 0:
                next_neg[i] += n_neg * eps_neg[i]
    return emb


def optimize_layout(fss: FuzzySimplicialSet, cfg: ProjectionConfig) -> Projection:
    W = fss.weights.tocoo()
    n = W.shape[0]
    dim = cfg.n_components
    if n == 0:
        return Projection(np.zeros((0, dim)), cfg, "empty")
    if n == 1:
        return Projection(np.zeros((1, dim)), cfg, "origin")
    a, b, _ = fit_ab(cfg.min_dist, cfg.spread)
    init_kind = "spectral"
    coords = spectral_init(fss.weights, dim)
    noise = uniform_stream(cfg.seed, 0, n * dim).reshape(n, dim)
    if coords is None:
        init_kind = "random"
        coords = noise * 20.0 - 10.0
    else:
        coords = coords * (10.0 / np.abs(coords).max()) + (noise - 0.5) * 2e-4
    emb = np.ascontiguousarray(coords, dtype=np.float64)
    # edges too weak to be sampled even once are dropped, as in the reference algorithm
    weights = W.data
    if weights.size:
        keep = weights >= weights.max() / cfg.n_epochs
        head = W.row[keep].astype(np.int64)
        tail = W.col[keep].astype(np.int64)
        eps = weights.max() / weights[keep]
        states = np.array([stream_seed(cfg.seed, e + 1) for e in range(cfg.n_epochs)], dtype=np.uint64)
        emb = _sgd(emb, head, tail, eps.astype(np.float64), a, b, cfg.n_epochs, cfg.learning_rate,
                   float(cfg.negative_sample_rate), states)
    if not np.all(np.isfinite(emb)):
        raise ManifoldError("layout diverged to non-finite coordinates")
    return Projection(emb, cfg, init_kind, list(fss.clamped))


def project(X, cfg: ProjectionConfig) -> Projection:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n <= 1:
        return Projection(np.zeros((n, cfg.n_components)), cfg, "origin")
    k = min(cfg.n_neighbors, n - 1)
    if k != cfg.n_neighbors:
        log.warning("n_neighbors=%d reduced to %d for %d points", cfg.n_neighbors, k, n)
    graph = knn_graph(X, k, cfg.metric)
    fss = fuzzy_simplicial_set(graph, k)
    if fss.clamped:
        log.info("sigma search clamped for points %s", fss.clamped)
    return optimize_layout(fss, cfg)
