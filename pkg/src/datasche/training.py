"""Per-slot data training: how much each worker trains, and which worker pairs cooperate.

Every worker either trains alone or pairs with exactly one partner and the two
exchange queued samples over their link. Both cases are solved in closed form
or as a small convex program, their optimal objectives become edge weights on
a cooperation graph (a worker ``j`` and its virtual twin ``j'`` carry the solo
value, a real pair carries the pair value) and a maximum-weight matching on
that graph picks the configuration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from . import kernels
from .collection import Matching
from .model import FrameworkConfig, MultiplierSet, QueueState, SystemState

LINEAR = "linear"
LOG = "log"


@dataclass
class TrainingWeights:
    """``beta[i, j]`` weighs local training; ``gamma[i, k, j]`` weighs training at
    ``j`` of source-``i`` samples shipped from ``k``'s queue."""

    beta: np.ndarray
    gamma: np.ndarray


@dataclass
class SoloPlan:
    worker: int
    x: np.ndarray
    objective: float


@dataclass
class PairPlan:
    workers: tuple[int, int]
    x_j: np.ndarray
    x_k: np.ndarray
    y_jk: np.ndarray   # held by j, trained by k
    y_kj: np.ndarray   # held by k, trained by j
    objective: float


@dataclass
class CooperationGraph:
    """Nodes ``0..M-1`` are workers; ``M + j`` is worker ``j``'s virtual twin."""

    n_workers: int
    edges: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def nodes(self) -> list[int]:
        return list(range(2 * self.n_workers))


def training_weights(mult: MultiplierSet, state: SystemState, config: FrameworkConfig) -> TrainingWeights:
    tail = (mult.lam * config.delta_hi - mult.phi * config.delta_lo).sum(axis=0)   # per trainer
    common = -state.p[None, :] - mult.lam + mult.phi + tail[None, :]              # [i, j]
    beta = common + mult.eta
    # gamma[i, k, j] = common[i, j] - e[k, j] + eta[i, k]
    gamma = common[:, None, :] - state.e[None, :, :] + mult.eta[:, :, None]
    return TrainingWeights(beta, gamma)


def solve_solo_linear(j: int, weights, r_column, f_j: float, rho: float) -> SoloPlan:
    """Fractional knapsack: fill the compute budget in descending weight order."""
    beta = np.asarray(weights, dtype=float)
    r = np.asarray(r_column, dtype=float)
    x = np.zeros_like(r)
    budget = f_j / rho
    for i in np.argsort(-beta, kind="stable"):
        if beta[i] <= 0 or budget <= 0:
            break
        take = min(r[i], budget)
        x[i] = take
        budget -= take
    return SoloPlan(j, x, float(beta @ x))


def water_fill(caps: np.ndarray, budget: float) -> tuple[np.ndarray, float]:
    """``x_i = min(caps_i, level)`` with ``sum x = budget`` (or every cap hit).

    Returns the allocation and the water level (``inf`` when no cap binds the
    budget).
    """
    caps = np.asarray(caps, dtype=float)
    if caps.size == 0 or budget <= 0:
        return np.zeros_like(caps), 0.0
    if caps.sum() <= budget:
        return caps.copy(), np.inf
    order = np.sort(caps)
    below = np.concatenate(([0.0], np.cumsum(order)[:-1]))
    remaining = np.arange(caps.size, 0, -1)
    levels = (budget - below) / remaining
    k = int(np.argmax(levels <= order))
    level = levels[k]
    return np.minimum(caps, level), float(level)


def solve_solo_log(j: int, weights, r_column, f_j: float, rho: float) -> SoloPlan:
    """Maximise ``sum ln(beta_i x_i)`` over sources with positive weight and backlog.

    The additive ``ln beta_i`` does not move the argmax, so the optimum is the
    water-filling allocation of the compute budget over the backlogs.
    """
    beta = np.asarray(weights, dtype=float)
    r = np.asarray(r_column, dtype=float)
    x = np.zeros_like(r)
    on = (beta > 0) & (r > 0)
    if not on.any() or f_j <= 0:
        return SoloPlan(j, x, 0.0)
    x[on], _ = water_fill(r[on], f_j / rho)
    return SoloPlan(j, x, float(np.sum(np.log(beta[on] * x[on]))))


def _pair_arrays(j, k, weights: TrainingWeights, queues: QueueState, state: SystemState, rho):
    coef = np.stack([weights.beta[:, j], weights.gamma[:, k, j],
                     weights.beta[:, k], weights.gamma[:, j, k]], axis=1)
    R = np.stack([queues.r[:, j], queues.r[:, k]], axis=1)
    caps = np.array([state.big_d[j, k], state.f[j] / rho, state.f[k] / rho])
    return coef, R, caps


def _repair(v, R, caps):
    """Clip to the feasible set by shrinking; solver round-off only."""
    v = np.maximum(v, 0.0)
    for q, (a, b) in enumerate(((0, 3), (1, 2))):
        load = v[:, a] + v[:, b]
        over = load > R[:, q]
        if over.any():
            s = np.where(over, R[:, q] / np.where(load > 0, load, 1.0), 1.0)
            v[:, a] *= s
            v[:, b] *= s
    for g, cols in enumerate(((1, 3), (0, 1), (2, 3))):
        load = v[:, list(cols)].sum()
        if load > caps[g]:
            v[:, list(cols)] *= caps[g] / load
    return v


def _plan_from(v, j, k, objective) -> PairPlan:
    return PairPlan((j, k), v[:, 0].copy(), v[:, 2].copy(), v[:, 3].copy(), v[:, 1].copy(), float(objective))


def solve_pair_linear(j: int, k: int, weights: TrainingWeights, queues: QueueState,
                      state: SystemState, rho: float) -> PairPlan:
    if j == k:
        raise ValueError("pair requires two distinct workers")
    coef, R, caps = _pair_arrays(j, k, weights, queues, state, rho)
    n = coef.shape[0]
    v = np.zeros((n, 4))
    use = coef > 0
    if not use.any():
        return _plan_from(v, j, k, 0.0)
    idx = np.flatnonzero(use.ravel())
    local = np.zeros((2 * n, 4 * n))
    for i in range(n):
        local[2 * i, 4 * i + 0] = local[2 * i, 4 * i + 3] = 1.0
        local[2 * i + 1, 4 * i + 1] = local[2 * i + 1, 4 * i + 2] = 1.0
    glob = np.tile(kernels._GLOBAL, (1, n))
    a_ub = np.vstack([local, glob])[:, idx]
    b_ub = np.concatenate([R.ravel(), caps])
    res = linprog(-coef.ravel()[idx], A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:  # pragma: no cover - zero plan is always feasible
        raise RuntimeError(f"pair LP failed: {res.message}")
    flat = np.zeros(4 * n)
    flat[idx] = res.x
    v = _repair(flat.reshape(n, 4), R, caps)
    return _plan_from(v, j, k, float(np.sum(coef * v)))


def pair_log_masks(coef, R, caps):
    """Which variables may move and which log terms count.

    A variable moves only if its weight is positive and every resource it uses
    is available; a term counts if at least one of its variables moves.
    """
    link, fj, fk = caps > 0
    r1, r2 = R[:, 0] > 0, R[:, 1] > 0
    free = np.stack([(coef[:, 0] > 0) & r1 & fj,
                     (coef[:, 1] > 0) & r2 & fj & link,
                     (coef[:, 2] > 0) & r2 & fk,
                     (coef[:, 3] > 0) & r1 & fk & link], axis=1)
    act = np.stack([free[:, 0] | free[:, 1], free[:, 2] | free[:, 3]], axis=1)
    return free, act


def _interior_start(free, R, caps):
    f = free.astype(float)
    loc = f @ kernels._LOCAL.T                       # free count per local row
    glob = (f @ kernels._GLOBAL.T).sum(axis=0)       # free count per global row
    with np.errstate(divide="ignore", invalid="ignore"):
        loc_share = np.where(loc > 0, R / (2 * loc), np.inf)
        glob_share = np.where(glob > 0, caps / (2 * glob), np.inf)
    v0 = np.full(free.shape, np.inf)
    for c in range(4):
        for q in range(2):
            if kernels._LOCAL[q, c]:
                v0[:, c] = np.minimum(v0[:, c], loc_share[:, q])
        for g in range(3):
            if kernels._GLOBAL[g, c]:
                v0[:, c] = np.minimum(v0[:, c], glob_share[g])
    return np.where(free, v0, 0.0)


def pair_log_objective(coef, v, act) -> float:
    terms = np.stack([coef[:, 0] * v[:, 0] + coef[:, 1] * v[:, 1],
                      coef[:, 2] * v[:, 2] + coef[:, 3] * v[:, 3]], axis=1)
    return float(np.sum(np.log(terms[act])))


def solve_pair_log(j: int, k: int, weights: TrainingWeights, queues: QueueState,
                   state: SystemState, rho: float) -> PairPlan:
    if j == k:
        raise ValueError("pair requires two distinct workers")
    coef, R, caps = _pair_arrays(j, k, weights, queues, state, rho)
    free, act = pair_log_masks(coef, R, caps)
    if not act.any():
        return _plan_from(np.zeros(coef.shape), j, k, 0.0)
    v0 = _interior_start(free, R, caps)
    v = kernels.pair_log_barrier(coef, free, act, R, caps, v0)
    v = np.where(free, v, 0.0)
    return _plan_from(v, j, k, pair_log_objective(coef, v, act))


def build_cooperation_graph(plans_solo: list[SoloPlan], plans_pair: dict[tuple[int, int], PairPlan]) -> CooperationGraph:
    m = len(plans_solo)
    edges = [(p.worker, m + p.worker, p.objective) for p in plans_solo if p.objective > 0]
    for (j, k), plan in sorted(plans_pair.items()):
        if plan.objective > 0:
            edges.append((j, k, plan.objective))
    return CooperationGraph(m, edges)


def blossom_max_matching(g: CooperationGraph) -> Matching:
    graph = nx.Graph()
    graph.add_nodes_from(g.nodes)
    for u, v, w in g.edges:
        graph.add_edge(u, v, weight=w)
    mate = nx.max_weight_matching(graph, maxcardinality=False)
    pairs = sorted(tuple(sorted(e)) for e in mate)
    total = sum(graph[u][v]["weight"] for u, v in pairs)
    return Matching(pairs, float(total))


def decode_training(m: Matching, plans_solo: list[SoloPlan], plans_pair: dict[tuple[int, int], PairPlan],
                    n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_workers = len(plans_solo)
    x = np.zeros((n, n_workers))
    y = np.zeros((n, n_workers, n_workers))
    z = np.zeros((n_workers, n_workers))
    for a, b in m.pairs:
        if b == a + n_workers:
            x[:, a] = plans_solo[a].x
            continue
        j, k = min(a, b), max(a, b)
        plan = plans_pair[(j, k)]
        x[:, j] = plan.x_j
        x[:, k] = plan.x_k
        y[:, j, k] = plan.y_jk
        y[:, k, j] = plan.y_kj
        z[j, k] = z[k, j] = 1.0
    return x, y, z


def solve_training(mult: MultiplierSet, state: SystemState, queues: QueueState, config: FrameworkConfig,
                   flavor: str = LOG, cooperate: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full training step: weights, solo/pair plans, cooperation matching, decode."""
    n, m = state.shape
    w = training_weights(mult, state, config)
    solo = solve_solo_log if flavor == LOG else solve_solo_linear
    pair = solve_pair_log if flavor == LOG else solve_pair_linear
    plans_solo = [solo(j, w.beta[:, j], queues.r[:, j], state.f[j], config.rho) for j in range(m)]
    plans_pair: dict[tuple[int, int], PairPlan] = {}
    if cooperate:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for j in range(m):
                for k in range(j + 1, m):
                    plans_pair[(j, k)] = pair(j, k, w, queues, state, config.rho)
    graph = build_cooperation_graph(plans_solo, plans_pair)
    return decode_training(blossom_max_matching(graph), plans_solo, plans_pair, n)
