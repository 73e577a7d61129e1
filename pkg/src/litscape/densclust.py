"""HDBSCAN: mutual reachability, Prim MST, condensed tree, cluster extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

LAMBDA_CAP = 1e12


class ClusteringError(Exception):
    pass


@dataclass
class ClusterConfig:
    min_cluster_size: int = 15
    min_samples: int = 1
    metric: str = "euclidean"
    selection: str = "leaf"  # "leaf" | "excess_of_mass"
    allow_single_cluster: bool = False

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ClusteringError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ClusteringError("min_samples must be >= 1")
        if self.selection not in ("leaf", "excess_of_mass"):
            raise ClusteringError(f"unknown selection {self.selection!r}")
        if self.metric not in ("euclidean", "cosine"):
            raise ClusteringError(f"unsupported metric {self.metric!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterConfig":
        return cls(**d)


@dataclass
class CondensedTree:
    """Rows ``(parent, child, lam, child_size)``.

    Point ids are ``0..n-1``; cluster ids start at ``n`` (the root).
    """

    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    child_size: np.ndarray
    n_points: int

    @property
    def root(self) -> int:
        return self.n_points

    def cluster_ids(self) -> list:
        ids = {self.root} | {int(c) for c in self.child[self.child >= self.n_points]}
        return sorted(ids)

    def children_of(self, cluster: int) -> list:
        mask = (self.parent == cluster) & (self.child >= self.n_points)
        return [int(c) for c in self.child[mask]]

    def birth_lambda(self, cluster: int) -> float:
        if cluster == self.root:
            return 0.0
        return float(self.lam[self.child == cluster][0])

    def to_json(self) -> str:
        rows = [
            {"parent": int(p), "child": int(c), "lambda": float(l), "child_size": int(s)}
            for p, c, l, s in zip(self.parent, self.child, self.lam, self.child_size)
        ]
        return json.dumps({"n_points": self.n_points, "rows": rows}, indent=1)


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    probabilities: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size and self.labels.max() >= 0 else 0


def pairwise_distances(points, metric: str = "euclidean") -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if metric == "cosine":
        X = X / np.linalg.norm(X, axis=1)[:, None]
        D = 0.5 * ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        return np.clip(D, 0.0, 2.0)
    return np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))


def core_distances(points, min_samples: int, metric: str = "euclidean", D=None) -> np.ndarray:
    """Distance from each point to its ``min_samples``-th nearest other point."""
    if D is None:
        D = pairwise_distances(points, metric)
    n = D.shape[0]
    if n <= min_samples:
        raise ClusteringError(f"need more than min_samples={min_samples} points, got {n}")
    # column 0 after sorting is the zero self-distance (or a duplicate, also zero)
    return np.sort(D, axis=1)[:, min_samples]


def mutual_reachability(d_ab, core_a, core_b):
    return max(core_a, core_b, d_ab)


def mutual_reachability_matrix(D: np.ndarray, core: np.ndarray) -> np.ndarray:
    M = np.maximum(D, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(M, 0.0)
    return M


def prim_mst(M: np.ndarray) -> np.ndarray:
    """MST edges ``(u, v, w)`` with ``u < v`` over a dense weight matrix, O(n^2)."""
    n = M.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    edges = []
    current = 0
    in_tree[0] = True
    for _ in range(n - 1):
        row = M[current]
        better = (~in_tree) & (row < best)
        best[better] = row[better]
        best_from[better] = current
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))  # first minimum: lowest index wins ties
        u, v = sorted((int(best_from[nxt]), nxt))
        edges.append((u, v, float(best[nxt])))
        in_tree[nxt] = True
        current = nxt
    return np.array(edges, dtype=[("u", np.int64), ("v", np.int64), ("w", np.float64)])


def single_linkage(edges, n: int) -> np.ndarray:
    """Binary dendrogram rows ``(left, right, distance, size)``, scipy layout."""
    order = np.lexsort((edges["v"], edges["u"], edges["w"]))
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    Z = np.zeros((n - 1, 4))
    for step, e in enumerate(order):
        a, b = find(edges["u"][e]), find(edges["v"][e])
        node = n + step
        parent[a] = parent[b] = node
        size[node] = size[a] + size[b]
        Z[step] = (min(a, b), max(a, b), edges["w"][e], size[node])
    return Z


def _lambda(d: float) -> float:
    return LAMBDA_CAP if d <= 0 or 1.0 / d > LAMBDA_CAP else 1.0 / d


def condense_tree(Z: np.ndarray, n: int, min_cluster_size: int) -> CondensedTree:
    """Walk the dendrogram from the top, keeping splits where both sides are big enough."""
    rows = []
    if n == 1:
        rows.append((n, 0, LAMBDA_CAP, 1))
    if n <= 1:
        return _tree(rows, n)
    root = 2 * n - 2
    relabel = {root: n}
    next_label = n + 1

    def size_of(node):
        return 1 if node < n else int(Z[node - n, 3])

    def leaves(node):
        stack, out = [node], []
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend((int(Z[x - n, 0]), int(Z[x - n, 1])))
        return out

    stack = [root]
    while stack:
        node = stack.pop()
        left, right, dist, _ = Z[node - n]
        left, right = int(left), int(right)
        lam = _lambda(dist)
        lsize, rsize = size_of(left), size_of(right)
        parent = relabel[node]
        if lsize >= min_cluster_size and rsize >= min_cluster_size:
            for ch, sz in ((left, lsize), (right, rsize)):
                relabel[ch] = next_label
                rows.append((parent, next_label, lam, sz))
                next_label += 1
                stack.append(ch)
        else:
            for ch, sz in ((left, lsize), (right, rsize)):
                if sz >= min_cluster_size:
                    relabel[ch] = parent
                    stack.append(ch)
                else:
                    rows.extend((parent, p, lam, 1) for p in leaves(ch))
    return _tree(rows, n)


def _tree(rows, n) -> CondensedTree:
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return CondensedTree(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2],
                         arr[:, 3].astype(np.int64), n)


def build_hierarchy(points, cfg: ClusterConfig) -> CondensedTree:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < cfg.min_cluster_size:
        raise ClusteringError(f"{n} points is fewer than min_cluster_size={cfg.min_cluster_size}")
    D = pairwise_distances(X, cfg.metric)
    core = core_distances(X, cfg.min_samples, D=D)
    M = mutual_reachability_matrix(D, core)
    Z = single_linkage(prim_mst(M), n)
    return condense_tree(Z, n, cfg.min_cluster_size)


def _descendant_points(tree: CondensedTree, cluster: int) -> np.ndarray:
    todo, pts = [cluster], []
    while todo:
        c = todo.pop()
        mask = tree.parent == c
        kids = tree.child[mask]
        pts.extend(int(k) for k in kids[kids < tree.n_points])
        todo.extend(int(k) for k in kids[kids >= tree.n_points])
    return np.array(sorted(pts), dtype=np.int64)


def _point_lambdas(tree: CondensedTree) -> np.ndarray:
    lam = np.zeros(tree.n_points)
    mask = tree.child < tree.n_points
    lam[tree.child[mask]] = tree.lam[mask]
    return lam


def _stability(tree: CondensedTree, cluster: int) -> float:
    birth = tree.birth_lambda(cluster)
    mask = tree.parent == cluster
    return float(np.sum((tree.lam[mask] - birth) * tree.child_size[mask]))


def _select_eom(tree: CondensedTree, allow_single: bool) -> list:
    clusters = tree.cluster_ids()
    stability = {c: _stability(tree, c) for c in clusters}
    selected = {}
    for c in sorted(clusters, reverse=True):  # children always carry larger ids
        kids = tree.children_of(c)
        child_total = sum(stability[k] for k in kids)
        if not kids or stability[c] >= child_total:
            selected[c] = True
            stack = list(kids)
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(tree.children_of(k))
        else:
            selected[c] = False
            stability[c] = child_total
    if not allow_single and selected.get(tree.root) and len(clusters) > 1:
        # root is never a cluster unless asked; fall back to its selected children
        selected[tree.root] = False
        for k in tree.children_of(tree.root):
            selected[k] = True
    elif not allow_single:
        selected[tree.root] = False
    return [c for c in clusters if selected.get(c)]


def select_clusters(tree: CondensedTree, cfg: Optional[ClusterConfig] = None) -> ClusterAssignment:
    """Flat clusters from a condensed tree (leaf or excess-of-mass selection).

    Clusters are numbered 0..C-1 by their lowest member index. Probability is
    the point's exit lambda over the largest exit lambda in its cluster.
    """
    cfg = cfg or ClusterConfig(min_cluster_size=2)
    n = tree.n_points
    labels = np.full(n, -1, dtype=np.int64)
    probs = np.zeros(n)
    if n == 0:
        return ClusterAssignment(labels, probs)
    clusters = tree.cluster_ids()
    if cfg.selection == "leaf":
        chosen = [c for c in clusters if not tree.children_of(c)]
        if chosen == [tree.root] and not cfg.allow_single_cluster:
            chosen = []
    else:
        chosen = _select_eom(tree, cfg.allow_single_cluster)
    point_lam = _point_lambdas(tree)
    members = [_descendant_points(tree, c) for c in chosen]
    members = [m for m in members if m.size]
    members.sort(key=lambda m: int(m[0]))
    for label, m in enumerate(members):
        labels[m] = label
        lam = point_lam[m]
        top = lam.max()
        probs[m] = np.clip(lam / top, 0.0, 1.0) if top > 0 else 1.0
    return ClusterAssignment(labels, probs)


def select_leaf_clusters(tree: CondensedTree, allow_single_cluster: bool = False) -> ClusterAssignment:
    return select_clusters(tree, ClusterConfig(min_cluster_size=2, selection="leaf",
                                               allow_single_cluster=allow_single_cluster))


def cluster(points, cfg: ClusterConfig):
    """Full HDBSCAN run; returns ``(assignment, tree)``."""
    tree = build_hierarchy(points, cfg)
    assignment = select_clusters(tree, cfg)
    counts = np.bincount(assignment.labels[assignment.labels >= 0]) if assignment.n_clusters else []
    if any(c < cfg.min_cluster_size for c in counts):
        raise ClusteringError("a cluster came out smaller than min_cluster_size")
    return assignment, tree


def top_members(assignment: ClusterAssignment, k: int = 15) -> dict:
    """Per cluster, up to ``k`` member indices by descending probability, lower index first on ties."""
    out = {}
    for label in range(assignment.n_clusters):
        idx = np.flatnonzero(assignment.labels == label)
        order = sorted(idx, key=lambda i: (-assignment.probabilities[i], i))
        out[label] = [int(i) for i in order[:k]]
    return out
