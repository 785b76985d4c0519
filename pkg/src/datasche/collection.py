"""Per-slot data collection: which source uploads to which worker, and for how long.

Both variants reduce to a maximum-weight bipartite matching. The baseline
variant gives each worker at most one source; the skew-aware variant expands
every worker into ``N`` copies whose edge weights telescope into the
proportional-fair objective, so a worker matched to ``n`` sources splits its
slot evenly among them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable

import numpy as np

from . import kernels
from .model import MultiplierSet, SystemState


@dataclass
class BipartiteGraph:
    """Left nodes are sources; right nodes are workers or ``(worker, copy)`` pairs.

    Weights are held densely (``-inf`` marks a missing edge); ``edges`` lists
    the stored ones.
    """

    left_nodes: list[int]
    right_nodes: list[Hashable]
    weights: np.ndarray

    @property
    def edges(self) -> list[tuple[int, Hashable, float]]:
        a, b = np.nonzero(np.isfinite(self.weights))
        return [(self.left_nodes[i], self.right_nodes[j], float(self.weights[i, j])) for i, j in zip(a, b)]

    @classmethod
    def from_edges(cls, left, right, edges) -> "BipartiteGraph":
        li = {u: a for a, u in enumerate(left)}
        ri = {v: b for b, v in enumerate(right)}
        w = np.full((len(left), len(right)), -np.inf)
        for u, v, wt in edges:
            w[li[u], ri[v]] = wt
        return cls(list(left), list(right), w)


@dataclass
class Matching:
    pairs: list[tuple[Hashable, Hashable]]
    total_weight: float


def collection_weight(mult: MultiplierSet, state: SystemState) -> np.ndarray:
    """``w[i, j] = d[i, j] * (mu[i] - eta[i, j] - c[i, j])``."""
    return state.d * (mult.mu[:, None] - mult.eta - state.c)


def build_baseline_graph(w: np.ndarray) -> BipartiteGraph:
    n, m = w.shape
    return BipartiteGraph(list(range(n)), list(range(m)), np.where(w > 0, w, -np.inf))


def copy_weight(w: float, n: int) -> float:
    """Edge weight of the ``n``-th copy (1-based): ``ln((n-1)^(n-1) w / n^n)``.

    Computed in log space so large ``n`` does not overflow; ``0^0 = 1``.
    """
    lead = (n - 1) * np.log(n - 1) if n > 1 else 0.0
    return float(lead + np.log(w) - n * np.log(n))


def build_skew_graph(w: np.ndarray) -> BipartiteGraph:
    n_src, m = w.shape
    copies = np.arange(1, n_src + 1)
    lead = np.where(copies > 1, (copies - 1) * np.log(np.maximum(copies - 1, 1)), 0.0)
    offset = lead - copies * np.log(copies)       # ln((n-1)^(n-1) / n^n)
    right = [(j, int(c)) for j in range(m) for c in copies]
    with np.errstate(divide="ignore", invalid="ignore"):
        lw = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), -np.inf)
    dense = (lw[:, :, None] + offset[None, None, :]).reshape(n_src, m * n_src)
    return BipartiteGraph(list(range(n_src)), right, dense)


def hungarian_max_matching(g: BipartiteGraph) -> Matching:
    """Maximum-weight (not necessarily perfect) matching.

    Non-positive edges never help a partial matching, so they are treated as
    absent: the dense weight matrix is clipped at zero and the assignment
    problem is solved on whichever orientation has fewer rows. Pairs landing
    on a zero entry are left unmatched.
    """
    w = g.weights
    if w.size == 0:
        return Matching([], 0.0)
    gain = np.where(w > 0, w, 0.0)
    flip = gain.shape[0] > gain.shape[1]
    mat = gain.T if flip else gain
    cols = kernels.assign_min_cost(-mat)
    pairs = []
    total = 0.0
    for r, cidx in enumerate(cols):
        a, b = (cidx, r) if flip else (r, cidx)
        if w[a, b] > 0:
            pairs.append((g.left_nodes[a], g.right_nodes[b]))
            total += w[a, b]
    pairs.sort(key=lambda e: (e[0], e[1]))
    return Matching(pairs, float(total))


def decode_baseline(m: Matching, n: int, n_workers: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.zeros((n, n_workers))
    theta = np.zeros((n, n_workers))
    for i, j in m.pairs:
        alpha[i, j] = 1.0
        theta[i, j] = 1.0
    return alpha, theta


def decode_skew(m: Matching, n: int, n_workers: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.zeros((n, n_workers))
    for i, (j, _copy) in m.pairs:
        alpha[i, j] = 1.0
    count = alpha.sum(axis=0)
    theta = np.where(alpha > 0, alpha / np.maximum(count, 1.0), 0.0)
    return alpha, theta


def solve_baseline(mult: MultiplierSet, state: SystemState) -> tuple[np.ndarray, np.ndarray]:
    n, m = state.shape
    return decode_baseline(hungarian_max_matching(build_baseline_graph(collection_weight(mult, state))), n, m)


def solve_skew(mult: MultiplierSet, state: SystemState) -> tuple[np.ndarray, np.ndarray]:
    n, m = state.shape
    return decode_skew(hungarian_max_matching(build_skew_graph(collection_weight(mult, state))), n, m)


def skew_objective(w: np.ndarray, alpha: np.ndarray, theta: np.ndarray) -> float:
    """Proportional-fair collection objective, counting only connected sources."""
    on = alpha > 0
    return float(np.sum(np.log(theta[on] * w[on])))
