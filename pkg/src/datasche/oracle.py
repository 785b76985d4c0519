"""Exponential-time reference solvers used to check the fast ones.

Nothing here shares code with the solvers under test: matchings are found by
exhaustive dynamic programming over node subsets and concave programs by
plain grid enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .collection import BipartiteGraph, Matching
from .training import CooperationGraph


class OracleSizeError(ValueError):
    """Instance too large to enumerate."""


def brute_bipartite_matching(g: BipartiteGraph, max_states: int = 5_000_000) -> Matching:
    """Exact maximum-weight matching over every matching of ``g``.

    Runs a DP over subsets of the smaller side; the larger side is scanned one
    node at a time, each node either left free or paired with any unused node
    of the smaller side.
    """
    w = np.asarray(g.weights, dtype=float)
    flip = w.shape[0] > w.shape[1]
    if flip:
        w = w.T
    small, large = w.shape
    if small == 0 or large == 0:
        return Matching([], 0.0)
    if (1 << small) * large > max_states:
        raise OracleSizeError(f"{small}x{large} bipartite instance too large to enumerate")
    n_masks = 1 << small
    tables = [np.full(n_masks, -np.inf)]
    tables[0][0] = 0.0
    for b in range(large):
        prev = tables[-1]
        new = prev.copy()
        for mask in range(n_masks):
            if prev[mask] == -np.inf:
                continue
            for a in range(small):
                if mask >> a & 1 or not np.isfinite(w[a, b]):
                    continue
                nm = mask | (1 << a)
                new[nm] = max(new[nm], prev[mask] + w[a, b])
        tables.append(new)
    mask = int(np.argmax(tables[-1]))
    total = float(tables[-1][mask])
    pairs = []
    for b in range(large - 1, -1, -1):
        after, before = tables[b + 1], tables[b]
        if after[mask] == before[mask]:
            continue
        for a in range(small):
            if mask >> a & 1 and np.isfinite(w[a, b]) and before[mask ^ (1 << a)] + w[a, b] == after[mask]:
                pairs.append((a, b))
                mask ^= 1 << a
                break
    out = []
    for a, b in pairs:
        i, j = (b, a) if flip else (a, b)
        out.append((g.left_nodes[i], g.right_nodes[j]))
    out.sort(key=lambda e: (e[0], e[1]))
    return Matching(out, total)


def brute_general_matching(g: CooperationGraph, max_nodes: int = 12) -> Matching:
    """Exact maximum-weight matching by recursion over node subsets."""
    nodes = g.nodes
    if len(nodes) > max_nodes:
        raise OracleSizeError(f"{len(nodes)} nodes exceeds the enumeration limit {max_nodes}")
    index = {v: a for a, v in enumerate(nodes)}
    adj: dict[int, list[tuple[int, float]]] = {a: [] for a in range(len(nodes))}
    for u, v, w in g.edges:
        adj[index[u]].append((index[v], w))
        adj[index[v]].append((index[u], w))

    @lru_cache(maxsize=None)
    def solve(remaining: int) -> tuple[float, tuple]:
        if remaining == 0:
            return 0.0, ()
        a = (remaining & -remaining).bit_length() - 1
        rest = remaining & ~(1 << a)
        best_val, best_pairs = solve(rest)
        for b, w in adj[a]:
            if rest >> b & 1:
                val, prs = solve(rest & ~(1 << b))
                if val + w > best_val:
                    best_val, best_pairs = val + w, prs + ((a, b),)
        return best_val, best_pairs

    val, prs = solve((1 << len(nodes)) - 1)
    pairs = sorted(tuple(sorted((nodes[a], nodes[b]))) for a, b in prs)
    return Matching(pairs, float(val))


@dataclass
class ConcaveProblem:
    """``max sum_t ln(terms[t] . v)`` (or ``objective . v`` when linear) subject to
    ``a_ub v <= b_ub`` and ``0 <= v <= upper``."""

    upper: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    terms: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    objective: np.ndarray | None = None

    @property
    def n_vars(self) -> int:
        return len(self.upper)

    @property
    def is_linear(self) -> bool:
        return self.objective is not None


@dataclass
class GridResult:
    value: float
    point: np.ndarray


def grid_concave_solve(problem: ConcaveProblem, step: float, max_points: int = 50_000_000,
                       chunk: int = 1_000_000, floor: float = 1e-12) -> GridResult:
    """Best feasible point of the lattice ``step * Z^n`` inside the box.

    Log arguments are floored at the fixed constant ``floor``, so the value is
    the true objective whenever the best point keeps every term above it.
    Lattices for ``step`` and ``step / 2`` are nested, which makes refinement
    monotone.
    """
    n = problem.n_vars
    if n > 6:
        raise OracleSizeError(f"{n} variables exceeds the grid limit 6")
    if n == 0:
        return GridResult(0.0, np.zeros(0))
    counts = np.floor(np.asarray(problem.upper, dtype=float) / step + 1e-9).astype(int) + 1
    counts = np.maximum(counts, 1)
    total = int(np.prod(counts))
    if total > max_points:
        raise OracleSizeError(f"grid of {total} points exceeds {max_points}")
    axes = [np.arange(c) * step for c in counts]
    best_val, best_pt = -np.inf, np.zeros(n)
    strides = np.cumprod(counts[::-1])[::-1]
    strides = np.append(strides[1:], 1)
    slack = 1e-9 * np.maximum(1.0, np.abs(problem.b_ub))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        pts = np.empty((flat.size, n))
        for d in range(n):
            pts[:, d] = axes[d][(flat // strides[d]) % counts[d]]
        if len(problem.b_ub):
            pts = pts[np.all(pts @ problem.a_ub.T <= problem.b_ub + slack, axis=1)]
        if pts.shape[0] == 0:
            continue
        if problem.is_linear:
            vals = pts @ problem.objective
        else:
            vals = np.log(np.maximum(pts @ problem.terms.T, floor)).sum(axis=1)
        a = int(np.argmax(vals))
        if vals[a] > best_val:
            best_val, best_pt = float(vals[a]), pts[a].copy()
    return GridResult(best_val, best_pt)


def solo_problem(beta, r, budget, flavor: str = "log") -> ConcaveProblem:
    """Single-worker training as a :class:`ConcaveProblem` over its usable sources."""
    beta = np.asarray(beta, dtype=float)
    r = np.asarray(r, dtype=float)
    on = (beta > 0) & (r > 0) & (float(budget) > 0)
    k = int(on.sum())
    a_ub = np.ones((1, k))
    b_ub = np.array([float(budget)])
    if flavor == "log":
        return ConcaveProblem(r[on], a_ub, b_ub, terms=np.diag(beta[on]))
    return ConcaveProblem(r[on], a_ub, b_ub, objective=beta[on])


def pair_problem(coef, R, caps, flavor: str = "log") -> tuple[ConcaveProblem, np.ndarray]:
    """Two-worker training over the variables that can move.

    ``coef`` is ``n x 4`` in the order (x_j, y_kj, x_k, y_jk); ``R`` is ``n x 2``
    (j's backlog, k's backlog); ``caps`` is (link, F_j, F_k). Returns the
    problem and the flat indices of the kept variables.
    """
    coef = np.asarray(coef, dtype=float)
    R = np.asarray(R, dtype=float)
    n = coef.shape[0]
    # resources used by each variable: R1, R2, link, Fj, Fk
    uses = np.array([[1, 0, 0, 1, 0], [0, 1, 1, 1, 0], [0, 1, 0, 0, 1], [1, 0, 1, 0, 1]], dtype=bool)
    rows_r, rows_g = [], []
    keep = []
    for i in range(n):
        for c in range(4):
            avail = np.array([R[i, 0], R[i, 1], caps[0], caps[1], caps[2]]) > 0
            if coef[i, c] > 0 and np.all(avail[uses[c]]):
                keep.append(4 * i + c)
    keep = np.array(keep, dtype=int)
    k = len(keep)
    src, col = keep // 4, keep % 4
    a = []
    b = []
    for i in range(n):
        for q, cols in enumerate(((0, 3), (1, 2))):
            row = ((src == i) & np.isin(col, cols)).astype(float)
            if row.any():
                a.append(row)
                b.append(R[i, q])
    for g, cols in enumerate(((1, 3), (0, 1), (2, 3))):
        row = np.isin(col, cols).astype(float)
        if row.any():
            a.append(row)
            b.append(caps[g])
    a_ub = np.array(a, dtype=float).reshape(len(a), k)
    b_ub = np.array(b, dtype=float)
    upper = np.zeros(k)
    for t, idx in enumerate(keep):
        i, c = divmod(idx, 4)
        lim = [R[i, 0], R[i, 1], caps[0], caps[1], caps[2]]
        upper[t] = min(l for l, u in zip(lim, uses[c]) if u)
    if flavor == "log":
        terms = []
        for i in range(n):
            for h in range(2):
                row = np.zeros(k)
                for t, idx in enumerate(keep):
                    if idx // 4 == i and idx % 4 in (2 * h, 2 * h + 1):
                        row[t] = coef[i, idx % 4]
                if row.any():
                    terms.append(row)
        return ConcaveProblem(upper, a_ub, b_ub, terms=np.array(terms, dtype=float).reshape(len(terms), k)), keep
    return ConcaveProblem(upper, a_ub, b_ub, objective=coef.ravel()[keep]), keep
