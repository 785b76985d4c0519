"""Per-slot scheduling loop: dual-driven decisions and multiplier updates.

``Scheduler`` owns the multipliers for one episode. Each slot it solves the
collection and training subproblems under the policy's effective
multipliers, caps uploads at what the sources actually hold, and takes a
projected stochastic-gradient step on every multiplier family. The
learning-aid variant keeps a second, empirical multiplier set that is driven
by a diminishing step and solved against a virtual decision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import collection, training
from .model import FrameworkConfig, MultiplierSet, QueueState, SlotDecision, SystemState, collected_amounts


class PolicyKind(str, enum.Enum):
    DS = "ds"
    LDS = "lds"
    NO_SDC = "no-sdc"
    NO_SDT = "no-sdt"
    NO_LSA = "no-lsa"
    ODT = "odt"
    ODC = "odc"

    @classmethod
    def parse(cls, name: str | "PolicyKind") -> "PolicyKind":
        if isinstance(name, PolicyKind):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for p in cls:
            if p.value == key:
                return p
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(p.value for p in cls)}")


def learning_aid_offset(epsilon: float) -> float:
    """``sqrt(eps) * log10(eps)^2``; base 10 gives 0.4 at eps = 0.01."""
    return math.sqrt(epsilon) * math.log10(epsilon) ** 2


@dataclass
class SchedulerState:
    theta_actual: MultiplierSet
    theta_empirical: MultiplierSet
    slot: int
    pi: float

    @classmethod
    def initial(cls, config: FrameworkConfig) -> "SchedulerState":
        n, m = config.n_sources, config.n_workers
        return cls(MultiplierSet.zeros(n, m), MultiplierSet.zeros(n, m), 0, learning_aid_offset(config.epsilon))


def diminishing_step(t: int, sigma0: float, power: float = 1.0) -> float:
    """``sigma0 / (1 + t) ** power``; ``power`` in (0.5, 1] keeps the
    Robbins-Monro conditions."""
    if t < 0 or sigma0 <= 0:
        raise ValueError("need t >= 0 and sigma0 > 0")
    if not 0.5 < power <= 1.0:
        raise ValueError("power must lie in (0.5, 1]")
    return sigma0 / (1.0 + t) ** power


def learning_aid_combine(sched: SchedulerState) -> MultiplierSet:
    """``actual + empirical - pi``, deliberately left unprojected."""
    return (sched.theta_actual + sched.theta_empirical).shift(-sched.pi)


def fixed_collection(config: FrameworkConfig, state: SystemState | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Static round-robin: source ``i`` always uploads to worker ``i mod M``,
    each worker splitting its slot evenly over its sources."""
    n, m = config.n_sources, config.n_workers
    alpha = np.zeros((n, m))
    alpha[np.arange(n), np.arange(n) % m] = 1.0
    count = alpha.sum(axis=0)
    theta = np.where(alpha > 0, 1.0 / np.maximum(count, 1.0), 0.0)
    return alpha, theta


def update_multipliers(mult: MultiplierSet, decision: SlotDecision, collected: np.ndarray, arrivals: np.ndarray,
                       config: FrameworkConfig, step: float, served: np.ndarray | None = None) -> MultiplierSet:
    """One projected gradient step on all four multiplier families.

    ``served`` is what the decision scheduled from each source (defaults to
    ``collected``); ``collected`` is what actually landed in worker queues.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if served is None:
        served = collected
    omega = decision.trained
    total = omega.sum(axis=0)[None, :]
    mu = np.maximum(mult.mu + step * (arrivals - served.sum(axis=1)), 0.0)
    eta = np.maximum(mult.eta + step * (collected - decision.drained), 0.0)
    phi = np.maximum(mult.phi + step * (config.delta_lo * total - omega), 0.0)
    lam = np.maximum(mult.lam + step * (omega - config.delta_hi * total), 0.0)
    return MultiplierSet(mu, eta, phi, lam)


def cap_uploads(planned: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each source's uploads down to its backlog. Returns (uploads, starved)."""
    want = planned.sum(axis=1)
    starved = want > q
    scale = np.where(starved, q / np.where(want > 0, want, 1.0), 1.0)
    return planned * scale[:, None], starved


def solve_slot(policy: PolicyKind, mult: MultiplierSet, queues: QueueState, state: SystemState,
               config: FrameworkConfig) -> SlotDecision:
    """Collection + training for one slot under fixed multipliers."""
    if policy is PolicyKind.NO_LSA:
        mult = mult.without_skew()
    if policy is PolicyKind.NO_SDC:
        alpha, theta = collection.solve_baseline(mult, state)
    elif policy is PolicyKind.ODT:
        alpha, theta = fixed_collection(config, state)
    else:
        alpha, theta = collection.solve_skew(mult, state)
    flavor = training.LINEAR if policy is PolicyKind.NO_SDT else training.LOG
    cooperate = policy is not PolicyKind.ODC
    x, y, z = training.solve_training(mult, state, queues, config, flavor=flavor, cooperate=cooperate)
    return SlotDecision(alpha, theta, x, y, z)


def datasche_step(policy, sched: SchedulerState, queues: QueueState, state: SystemState,
                  config: FrameworkConfig) -> SlotDecision:
    policy = PolicyKind.parse(policy)
    if policy is PolicyKind.LDS:
        return solve_slot(PolicyKind.DS, learning_aid_combine(sched), queues, state, config)
    return solve_slot(policy, sched.theta_actual, queues, state, config)


class Scheduler:
    """Runs one policy over an episode.

    ``step`` makes the slot decision, caps uploads, and updates multipliers;
    the caller advances the real queues with the returned decision and uploads.
    """

    def __init__(self, policy, config: FrameworkConfig, sigma0: float = 1.0, sigma_power: float = 1.0):
        self.policy = PolicyKind.parse(policy)
        self.config = config
        self.sigma0 = sigma0
        self.sigma_power = sigma_power
        self.state = SchedulerState.initial(config)
        self.last_virtual: SlotDecision | None = None

    def step(self, queues: QueueState, state: SystemState, arrivals: np.ndarray):
        if self.policy is PolicyKind.LDS:
            return learning_aid_step(self.state, queues, state, self.config, arrivals,
                                     self.sigma0, self.sigma_power, scheduler=self)
        cfg = self.config
        decision = datasche_step(self.policy, self.state, queues, state, cfg)
        planned = collected_amounts(decision, state)
        uploads, starved = cap_uploads(planned, queues.q)
        new = update_multipliers(self.state.theta_actual, decision, uploads, arrivals, cfg, cfg.epsilon, served=planned)
        if self.policy is PolicyKind.NO_LSA:
            new = new.without_skew()
        self.state.theta_actual = new
        self.state.slot += 1
        return decision, uploads, starved


def learning_aid_step(sched: SchedulerState, queues: QueueState, state: SystemState, config: FrameworkConfig,
                      arrivals: np.ndarray, sigma0: float = 1.0, sigma_power: float = 1.0, scheduler=None):
    """Five-step learning-aid slot. Returns the executed (step 1) decision with
    its capped uploads and starvation mask; the step 3 decision is virtual."""
    # 1: decide with the learning-aid multipliers
    decision = solve_slot(PolicyKind.DS, learning_aid_combine(sched), queues, state, config)
    planned = collected_amounts(decision, state)
    uploads, starved = cap_uploads(planned, queues.q)
    # 2: actual multipliers, fixed step
    sched.theta_actual = update_multipliers(sched.theta_actual, decision, uploads, arrivals, config,
                                            config.epsilon, served=planned)
    # 3: decide with the empirical multipliers (never executed)
    virtual = solve_slot(PolicyKind.DS, sched.theta_empirical, queues, state, config)
    v_planned = collected_amounts(virtual, state)
    v_uploads, _ = cap_uploads(v_planned, queues.q)
    # 4: empirical multipliers, diminishing step
    sigma = diminishing_step(sched.slot, sigma0, sigma_power)
    sched.theta_empirical = update_multipliers(sched.theta_empirical, virtual, v_uploads, arrivals, config,
                                               sigma, served=v_planned)
    # 5: the combination is recomputed from both sets on the next call
    sched.slot += 1
    if scheduler is not None:
        scheduler.last_virtual = virtual
    return decision, uploads, starved
