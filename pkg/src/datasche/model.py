"""Domain types and the per-slot state arithmetic of the framework.

Conventions used across the package:

* ``N`` sources (data generators) indexed by ``i``; ``M`` workers indexed by
  ``j``/``k``.
* Sample counts are real-valued.
* ``y[i, j, k]`` is the amount of source ``i`` data held in worker ``j``'s
  queue that is shipped to worker ``k`` and trained there.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np


class StructuralError(ValueError):
    """Array shapes disagree with the configured system size."""


class InvariantViolation(RuntimeError):
    """A per-slot constraint was broken. Always signals a solver bug."""

    def __init__(self, message: str, slot: int | None = None):
        self.slot = slot
        if slot is not None:
            message = f"slot {slot}: {message}"
        super().__init__(message)


class DegenerateInput(ValueError):
    """Input is well-formed but carries no usable information."""


class ConfigError(ValueError):
    """Configuration value is missing or out of range. ``key`` names it."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class FrameworkConfig:
    n_sources: int
    n_workers: int
    rho: float
    zeta: float
    delta: float
    epsilon: float
    q0: float = 1e5
    horizon: int = 60
    slot_length: float = 120.0
    sample_size: float = 320e3

    def __post_init__(self):
        if int(self.n_sources) != self.n_sources or self.n_sources < 1:
            raise ConfigError("n_sources", "must be a positive integer")
        if int(self.n_workers) != self.n_workers or self.n_workers < 1:
            raise ConfigError("n_workers", "must be a positive integer")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError("horizon", "must be an integer >= 1")
        if not self.delta > 0.0:
            raise ConfigError("delta", "must be > 0")
        for key in ("epsilon", "rho", "slot_length", "sample_size"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be > 0")
        for key in ("zeta", "q0"):
            if not getattr(self, key) >= 0:
                raise ConfigError(key, "must be >= 0")

    @property
    def delta_lo(self) -> float:
        """Lower proportion bound ``1/N - delta``."""
        return 1.0 / self.n_sources - self.delta

    @property
    def delta_hi(self) -> float:
        """Upper proportion bound ``1/N + delta``."""
        return 1.0 / self.n_sources + self.delta

    def with_overrides(self, **kw) -> "FrameworkConfig":
        return replace(self, **kw)


def _as_array(value, shape, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise StructuralError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


@dataclass
class SystemState:
    """Capacities and unit costs observed at the start of a slot.

    ``d`` and ``big_d`` are in samples per slot; ``f`` in CPU cycles per slot;
    ``c``, ``e``, ``p`` in cost units per sample.
    """

    d: np.ndarray
    big_d: np.ndarray
    f: np.ndarray
    c: np.ndarray
    e: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        n, m = self.d.shape
        self.big_d = _as_array(self.big_d, (m, m), "big_d")
        self.f = _as_array(self.f, (m,), "f")
        self.c = _as_array(self.c, (n, m), "c")
        self.e = _as_array(self.e, (m, m), "e")
        self.p = _as_array(self.p, (m,), "p")
        for f_ in fields(self):
            if np.any(getattr(self, f_.name) < 0):
                raise StructuralError(f"{f_.name}: entries must be >= 0")
        if np.any(np.diag(self.big_d) != 0):
            raise StructuralError("big_d: diagonal must be zero")

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape


@dataclass
class QueueState:
    q: np.ndarray
    r: np.ndarray

    @classmethod
    def initial(cls, config: FrameworkConfig) -> "QueueState":
        n, m = config.n_sources, config.n_workers
        return cls(np.full(n, float(config.q0)), np.zeros((n, m)))

    def copy(self) -> "QueueState":
        return QueueState(self.q.copy(), self.r.copy())


@dataclass
class MultiplierSet:
    """Lagrange multipliers for the four families of long-term constraints."""

    mu: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    lam: np.ndarray

    @classmethod
    def zeros(cls, n: int, m: int) -> "MultiplierSet":
        return cls(np.zeros(n), np.zeros((n, m)), np.zeros((n, m)), np.zeros((n, m)))

    def copy(self) -> "MultiplierSet":
        return MultiplierSet(self.mu.copy(), self.eta.copy(), self.phi.copy(), self.lam.copy())

    def __add__(self, other: "MultiplierSet") -> "MultiplierSet":
        return MultiplierSet(self.mu + other.mu, self.eta + other.eta,
                             self.phi + other.phi, self.lam + other.lam)

    def shift(self, amount: float) -> "MultiplierSet":
        """Add ``amount`` to every entry (no projection)."""
        return MultiplierSet(self.mu + amount, self.eta + amount,
                             self.phi + amount, self.lam + amount)

    def without_skew(self) -> "MultiplierSet":
        n, m = self.eta.shape
        return MultiplierSet(self.mu.copy(), self.eta.copy(), np.zeros((n, m)), np.zeros((n, m)))

    def is_nonnegative(self) -> bool:
        return all(np.all(a >= 0) for a in (self.mu, self.eta, self.phi, self.lam))


@dataclass
class SlotDecision:
    alpha: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @classmethod
    def empty(cls, n: int, m: int) -> "SlotDecision":
        return cls(np.zeros((n, m)), np.zeros((n, m)), np.zeros((n, m)),
                   np.zeros((n, m, m)), np.zeros((m, m)))

    @property
    def trained(self) -> np.ndarray:
        """Per-(source, trainer) amounts: ``x[i, j] + sum_k y[i, k, j]``."""
        return self.x + self.y.sum(axis=1)

    @property
    def drained(self) -> np.ndarray:
        """Per-(source, holder) amounts leaving ``R``: ``x + sum_k y[i, j, k]``."""
        return self.x + self.y.sum(axis=2)


@dataclass
class SkewLedger:
    omega_cum: np.ndarray

    @classmethod
    def zeros(cls, n: int, m: int) -> "SkewLedger":
        return cls(np.zeros((n, m)))

    def add(self, omega: np.ndarray) -> None:
        if np.any(omega < 0):
            raise InvariantViolation("negative trained amount")
        self.omega_cum = self.omega_cum + omega


@dataclass
class SlotMetrics:
    cost_collect: float
    cost_offload: float
    cost_train: float
    omega: np.ndarray = field(repr=False)
    uploaded: np.ndarray = field(repr=False)
    backlog_q_total: float = 0.0
    backlog_r_total: float = 0.0
    max_skew_deviation: float = 0.0
    starved_count: int = 0

    @property
    def total_cost(self) -> float:
        return self.cost_collect + self.cost_offload + self.cost_train


def _check_nm(arr, n, m, name):
    if arr.shape != (n, m):
        raise StructuralError(f"{name}: expected shape {(n, m)}, got {arr.shape}")


def collected_amounts(decision: SlotDecision, state: SystemState) -> np.ndarray:
    """Samples each source uploads to each worker: ``alpha * theta * d``."""
    n, m = state.shape
    _check_nm(decision.alpha, n, m, "alpha")
    _check_nm(decision.theta, n, m, "theta")
    return decision.alpha * decision.theta * state.d


def advance_source_queues(queues: QueueState, served: np.ndarray, arrivals: np.ndarray) -> QueueState:
    served = np.asarray(served, dtype=float)
    arrivals = np.asarray(arrivals, dtype=float)
    n = queues.q.shape[0]
    if served.ndim != 2 or served.shape[0] != n:
        raise StructuralError(f"served: expected {n} rows, got shape {served.shape}")
    if arrivals.shape != (n,):
        raise StructuralError(f"arrivals: expected shape {(n,)}, got {arrivals.shape}")
    q = np.maximum(queues.q - served.sum(axis=1), 0.0) + arrivals
    return QueueState(q, queues.r.copy())


def advance_worker_queues(queues: QueueState, decision: SlotDecision, collected: np.ndarray,
                          tol: float = 1e-9) -> QueueState:
    """Worker queue update. The inner projection never clips when the drain
    respects the current backlog; anything beyond ``tol`` is a solver bug."""
    n, m = queues.r.shape
    _check_nm(collected, n, m, "collected")
    drained = decision.drained
    excess = drained - queues.r
    if np.any(excess > tol * np.maximum(1.0, queues.r)):
        i, j = np.unravel_index(np.argmax(excess), excess.shape)
        raise InvariantViolation(
            f"drain {drained[i, j]:.6g} exceeds backlog R[{i},{j}]={queues.r[i, j]:.6g}")
    r = np.maximum(queues.r - drained, 0.0) + collected
    return QueueState(queues.q.copy(), r)


def framework_cost(decision: SlotDecision, state: SystemState, collected: np.ndarray) -> tuple[float, float, float]:
    """Returns ``(collection, offloading, training)`` cost for one slot."""
    cost_collect = float(np.sum(state.c * collected))
    offloaded = decision.y.sum(axis=0)  # [holder, trainer]
    cost_offload = float(np.sum(state.e * offloaded))
    cost_train = float(np.sum(state.p * decision.trained.sum(axis=0)))
    return cost_collect, cost_offload, cost_train


def skew_deviation(ledger: SkewLedger, config: FrameworkConfig) -> np.ndarray:
    """``|share of source i in worker j's trained data - 1/N|``; zero for idle workers."""
    omega = ledger.omega_cum
    totals = omega.sum(axis=0)
    out = np.zeros_like(omega)
    busy = totals > 0
    out[:, busy] = np.abs(omega[:, busy] / totals[busy] - 1.0 / config.n_sources)
    return out


def aggregate_parameters(weights, params) -> np.ndarray:
    """Weighted mean of per-worker parameter vectors, weighted by trained counts."""
    w = np.asarray(weights, dtype=float)
    v = np.asarray(params, dtype=float)
    if v.ndim != 2 or v.shape[0] != w.shape[0]:
        raise StructuralError(f"params: expected {w.shape[0]} vectors, got shape {v.shape}")
    if np.any(w < 0):
        raise DegenerateInput("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise DegenerateInput("all aggregation weights are zero")
    return w @ v / total


def check_decision(decision: SlotDecision, state: SystemState, queues: QueueState,
                   rho: float, tol: float = 1e-9, slot: int | None = None) -> None:
    """Raise ``InvariantViolation`` naming the first broken per-slot constraint."""
    n, m = state.shape
    a, th, x, y, z = decision.alpha, decision.theta, decision.x, decision.y, decision.z

    def fail(msg):
        raise InvariantViolation(msg, slot)

    def over(lhs, rhs):
        return lhs - rhs > tol * np.maximum(1.0, np.abs(rhs))

    if y.shape != (n, m, m) or z.shape != (m, m):
        raise StructuralError("decision has wrong shape")
    if not np.all((a == 0) | (a == 1)):
        fail("alpha must be binary")
    if np.any(a.sum(axis=1) > 1):
        fail("[one-worker] a source connects to more than one worker")
    if np.any(th < -tol) or np.any(over(th.sum(axis=0), 1.0)):
        fail("[slot-share] connection durations exceed the slot")
    if np.any((th > 0) & (a == 0)):
        fail("theta set on an unconnected pair")
    if not np.all((z == 0) | (z == 1)) or np.any(z != z.T) or np.any(np.diag(z) != 0):
        fail("[pairing] z must be binary, symmetric, zero diagonal")
    if np.any(z.sum(axis=1) > 1):
        fail("[pairing] a worker has more than one partner")
    if np.any(x < -tol) or np.any(y < -tol):
        fail("negative training amount")
    if np.any((y > tol) & (z[None, :, :] == 0)):
        fail("[link] offload between unconnected workers")
    link = y.sum(axis=0)
    if np.any(over(link + link.T, state.big_d)):
        fail("[link-capacity] offload exceeds link capacity")
    if np.any(over(decision.trained.sum(axis=0) * rho, state.f)):
        fail("[compute] training exceeds compute capacity")
    if np.any(over(decision.drained, queues.r)):
        fail("[backlog] drain exceeds queue backlog")
