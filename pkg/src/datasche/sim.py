"""Stochastic arrivals, capacity and cost dynamics, and episode execution."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    ConfigError,
    FrameworkConfig,
    InvariantViolation,
    QueueState,
    SkewLedger,
    SlotDecision,
    SlotMetrics,
    SystemState,
    advance_source_queues,
    advance_worker_queues,
    check_decision,
    framework_cost,
    skew_deviation,
)
from .scheduler import PolicyKind, Scheduler

log = logging.getLogger(__name__)

SYNTHETIC = "synthetic-uniform"
FILE = "file-driven"
ARRIVAL_LAWS = ("double-uniform", "half-plus-uniform")
COST_LAWS = ("one-plus-uniform", "half-plus-uniform")


@dataclass
class TraceSpec:
    """Baselines and load dynamics for one deployment.

    Rates are given either explicitly per entity or as a list of choices drawn
    once per episode from the layout stream.
    """

    link_rate: list[float] = field(default_factory=lambda: [50e3, 100e3])   # bits/s, source -> worker
    worker_link_rate: list[float] = field(default_factory=lambda: [300e3])  # bits/s, worker <-> worker
    cpu_rate: list[float] = field(default_factory=lambda: [6e9, 24e9, 6e9])  # cycles/s per worker
    link_rate_explicit: bool = False
    worker_link_rate_explicit: bool = False
    cpu_rate_explicit: bool = True
    cost_collect: float = 300.0
    cost_offload: float = 50.0
    cost_train: float = 150.0
    mode: str = SYNTHETIC
    load_file: str | None = None
    load_low: float = 0.0
    load_high: float = 1.0
    arrival_law: str = "double-uniform"
    cost_law: str = "one-plus-uniform"

    def __post_init__(self):
        if self.mode not in (SYNTHETIC, FILE):
            raise ConfigError("trace.mode", f"expected {SYNTHETIC!r} or {FILE!r}, got {self.mode!r}")
        if self.mode == FILE and not self.load_file:
            raise ConfigError("trace.load_file", "required in file-driven mode")
        for key in ("link_rate", "worker_link_rate", "cpu_rate"):
            vals = np.asarray(getattr(self, key), dtype=float)
            if vals.size == 0 or np.any(vals < 0):
                raise ConfigError(f"trace.{key}", "needs at least one non-negative value")
        for key in ("cost_collect", "cost_offload", "cost_train"):
            if getattr(self, key) < 0:
                raise ConfigError(f"trace.{key}", "must be >= 0")
        if not 0.0 <= self.load_low <= self.load_high <= 1.0:
            raise ConfigError("trace.load_low", "need 0 <= load_low <= load_high <= 1")
        if self.arrival_law not in ARRIVAL_LAWS:
            raise ConfigError("trace.arrival_law", f"choose from {ARRIVAL_LAWS}")
        if self.cost_law not in COST_LAWS:
            raise ConfigError("trace.cost_law", f"choose from {COST_LAWS}")


def load_trace_file(path) -> np.ndarray:
    """Normalized loads, one row per line, whitespace-separated columns."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip() and not line.startswith("#")]
    if not rows:
        raise ConfigError("trace.load_file", f"{path} holds no values")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ConfigError("trace.load_file", f"{path} has ragged columns")
    data = np.array(rows, dtype=float)
    if np.any(data < 0) or np.any(data > 1):
        raise ConfigError("trace.load_file", f"{path} has values outside [0, 1]")
    return data


def write_trace_file(series, path, peak: float | None = None) -> np.ndarray:
    """Normalize raw traffic (one column per entity) by ``peak`` (default: the
    series maximum) and write it in the format :func:`load_trace_file` reads."""
    data = np.atleast_2d(np.asarray(series, dtype=float))
    if data.shape[0] == 1:
        data = data.T
    if np.any(data < 0):
        raise ValueError("traffic must be non-negative")
    peak = float(data.max()) if peak is None else float(peak)
    norm = np.clip(data / peak, 0.0, 1.0) if peak > 0 else np.zeros_like(data)
    np.savetxt(path, norm, fmt="%.6f")
    return norm


class LoadSource:
    """Per-slot normalized loads for every link and worker.

    File mode gives each entity a column (``index mod n_columns``) and a
    random starting record, then replays consecutive records, wrapping around
    with a warning when the series runs out.
    """

    def __init__(self, spec: TraceSpec, config: FrameworkConfig, rng: np.random.Generator):
        self.spec = spec
        self.n, self.m = config.n_sources, config.n_workers
        self.n_entities = self.n * self.m + self.m * self.m + self.m
        self._warned = False
        if spec.mode == FILE:
            self.data = load_trace_file(spec.load_file)
            length, width = self.data.shape
            self.columns = np.arange(self.n_entities) % width
            self.offsets = rng.integers(0, length, size=self.n_entities)
        else:
            self.data = None

    def draw(self, rng: np.random.Generator, t: int):
        if self.data is None:
            lo, hi = self.spec.load_low, self.spec.load_high
            flat = lo + (hi - lo) * rng.random(self.n_entities)
        else:
            length = self.data.shape[0]
            idx = self.offsets + t
            if not self._warned and np.any(idx >= length):
                log.warning("load trace %s exhausted at slot %d; wrapping around", self.spec.load_file, t)
                self._warned = True
            flat = self.data[idx % length, self.columns]
        a = self.n * self.m
        links = flat[:a].reshape(self.n, self.m)
        mesh = flat[a:a + self.m * self.m].reshape(self.m, self.m)
        mesh = np.triu(mesh, 1) + np.triu(mesh, 1).T
        cpu = flat[a + self.m * self.m:]
        return links, mesh, cpu


@dataclass
class Layout:
    """Per-episode baseline rates after drawing from the choice lists."""

    link_rate: np.ndarray
    worker_link_rate: np.ndarray
    cpu_rate: np.ndarray


def _pick(values, explicit: bool, shape, rng, key):
    vals = np.asarray(values, dtype=float)
    if explicit:
        if vals.size == 1:
            return np.full(shape, float(vals[0]))
        if vals.size != int(np.prod(shape)):
            raise ConfigError(f"trace.{key}", f"expected {int(np.prod(shape))} explicit values, got {vals.size}")
        return vals.reshape(shape)
    return rng.choice(vals, size=shape)


def draw_layout(spec: TraceSpec, config: FrameworkConfig, rng: np.random.Generator) -> Layout:
    n, m = config.n_sources, config.n_workers
    link = _pick(spec.link_rate, spec.link_rate_explicit, (n, m), rng, "link_rate")
    mesh = _pick(spec.worker_link_rate, spec.worker_link_rate_explicit, (m, m), rng, "worker_link_rate")
    mesh = np.triu(mesh, 1) + np.triu(mesh, 1).T
    cpu = _pick(spec.cpu_rate, spec.cpu_rate_explicit, (m,), rng, "cpu_rate")
    return Layout(link, mesh, cpu)


def gen_arrivals(config: FrameworkConfig, rng: np.random.Generator, law: str = "double-uniform") -> np.ndarray:
    """``round(2 zeta U)`` per source (mean ``zeta``); the alternative law is
    ``round(zeta (0.5 + U))``."""
    u = rng.random(config.n_sources)
    if law == "double-uniform":
        return np.round(2.0 * config.zeta * u)
    if law == "half-plus-uniform":
        return np.round(config.zeta * (0.5 + u))
    raise ConfigError("trace.arrival_law", f"unknown law {law!r}")


def _cost_factor(rng, shape, law):
    u = rng.random(shape)
    return 1.0 + u if law == "one-plus-uniform" else 0.5 + u


def capacities_from_loads(layout: Layout, config: FrameworkConfig, links, mesh, cpu):
    """Samples per slot on links and cycles per slot on workers."""
    per_slot = config.slot_length / config.sample_size
    d = np.floor(layout.link_rate * (1.0 - links) * per_slot + 1e-9)
    big_d = np.floor(layout.worker_link_rate * (1.0 - mesh) * per_slot + 1e-9)
    np.fill_diagonal(big_d, 0.0)
    f = layout.cpu_rate * (1.0 - cpu) * config.slot_length
    return d, big_d, f


def gen_capacities(spec: TraceSpec, config: FrameworkConfig, rng: np.random.Generator, t: int,
                   layout: Layout | None = None, loads: LoadSource | None = None) -> SystemState:
    if layout is None:
        layout = draw_layout(spec, config, rng)
    if loads is None:
        loads = LoadSource(spec, config, rng)
    links, mesh, cpu = loads.draw(rng, t)
    d, big_d, f = capacities_from_loads(layout, config, links, mesh, cpu)
    n, m = config.n_sources, config.n_workers
    c = spec.cost_collect * _cost_factor(rng, (n, m), spec.cost_law)
    e = spec.cost_offload * _cost_factor(rng, (m, m), spec.cost_law)
    np.fill_diagonal(e, 0.0)
    p = spec.cost_train * _cost_factor(rng, m, spec.cost_law)
    return SystemState(d, big_d, f, c, e, p)


@dataclass
class Episode:
    config: FrameworkConfig
    traces: TraceSpec
    seed: int
    policy: PolicyKind = PolicyKind.DS
    sigma0: float = 1.0
    sigma_power: float = 1.0

    def __post_init__(self):
        self.policy = PolicyKind.parse(self.policy)
        if self.config.horizon < 1:
            raise ConfigError("horizon", "must be >= 1")


@dataclass
class SlotRecord:
    """Full per-slot snapshot, kept only when an episode is run with ``record=True``."""

    queues_before: QueueState
    decision: SlotDecision
    uploads: np.ndarray
    arrivals: np.ndarray
    eta_after: np.ndarray
    r_after: np.ndarray


@dataclass
class EpisodeResult:
    episode: Episode
    metrics: list[SlotMetrics]
    summary: dict
    records: list[SlotRecord] | None = None


def episode_streams(seed: int):
    """Independent generators for layout, loads, arrivals and costs."""
    children = np.random.SeedSequence(seed).spawn(4)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def run_episode(ep: Episode, record: bool = False, check: bool = True) -> EpisodeResult:
    cfg = ep.config
    n, m = cfg.n_sources, cfg.n_workers
    layout_rng, load_rng, arrival_rng, cost_rng = episode_streams(ep.seed)
    layout = draw_layout(ep.traces, cfg, layout_rng)
    loads = LoadSource(ep.traces, cfg, layout_rng)
    sched = Scheduler(ep.policy, cfg, sigma0=ep.sigma0, sigma_power=ep.sigma_power)
    queues = QueueState.initial(cfg)
    ledger = SkewLedger.zeros(n, m)
    metrics: list[SlotMetrics] = []
    records: list[SlotRecord] | None = [] if record else None
    uploaded_total = np.zeros(n)
    r0 = float(queues.r.sum())
    for t in range(cfg.horizon):
        links, mesh, cpu = loads.draw(load_rng, t)
        d, big_d, f = capacities_from_loads(layout, cfg, links, mesh, cpu)
        spec = ep.traces
        c = spec.cost_collect * _cost_factor(cost_rng, (n, m), spec.cost_law)
        e = spec.cost_offload * _cost_factor(cost_rng, (m, m), spec.cost_law)
        np.fill_diagonal(e, 0.0)
        p = spec.cost_train * _cost_factor(cost_rng, m, spec.cost_law)
        state = SystemState(d, big_d, f, c, e, p)
        arrivals = gen_arrivals(cfg, arrival_rng, spec.arrival_law)

        before = queues
        decision, uploads, starved = sched.step(queues, state, arrivals)
        if check:
            check_decision(decision, state, queues, cfg.rho, slot=t)
        queues = advance_source_queues(queues, uploads, arrivals)
        try:
            queues = advance_worker_queues(queues, decision, uploads)
        except InvariantViolation as exc:
            raise InvariantViolation(str(exc), slot=t) from None
        cc, co, ct = framework_cost(decision, state, uploads)
        omega = decision.trained
        ledger.add(omega)
        uploaded_total += uploads.sum(axis=1)
        dev = skew_deviation(ledger, cfg)
        metrics.append(SlotMetrics(cc, co, ct, omega, uploads, float(queues.q.sum()), float(queues.r.sum()),
                                   float(dev.max()), int(starved.sum())))
        if records is not None:
            records.append(SlotRecord(before, decision, uploads, arrivals,
                                      sched.state.theta_actual.eta.copy(), queues.r.copy()))
    summary = summarize_episode(ep, metrics, ledger, uploaded_total, queues, r0)
    return EpisodeResult(ep, metrics, summary, records)


def summarize_episode(ep: Episode, metrics: list[SlotMetrics], ledger: SkewLedger, uploaded_total: np.ndarray,
                      queues: QueueState, r0: float) -> dict:
    cfg = ep.config
    total_cost = float(sum(s.total_cost for s in metrics))
    trained = float(ledger.omega_cum.sum())
    backlog = np.array([s.backlog_q_total + s.backlog_r_total for s in metrics])
    return {
        "policy": ep.policy.value,
        "seed": int(ep.seed),
        "epsilon": float(cfg.epsilon),
        "horizon": int(cfg.horizon),
        "time_average_cost": total_cost / cfg.horizon,
        "total_cost": total_cost,
        "total_trained": trained,
        "total_uploaded": float(uploaded_total.sum()),
        "final_backlog_q": float(queues.q.sum()),
        "final_backlog_r": float(queues.r.sum()),
        "initial_backlog_r": r0,
        "time_average_backlog": float(backlog.mean()),
        "max_skew_deviation": float(metrics[-1].max_skew_deviation) if metrics else 0.0,
        "upload_per_source": [float(v) for v in uploaded_total],
        "upload_stdev": float(np.std(uploaded_total)),
        "unit_training_cost": total_cost / trained if trained > 0 else float("inf"),
        "starved_slots": int(sum(s.starved_count for s in metrics)),
    }


COMPARE_FIELDS = ("time_average_cost", "total_trained", "unit_training_cost", "upload_stdev",
                  "max_skew_deviation", "time_average_backlog")


def summarize_comparison(runs: list[dict], key: str = "policy") -> dict:
    """Seed-averaged rows grouped by ``key`` plus ratios of every row to every other."""
    if not runs:
        raise ValueError("need at least one run")
    groups: dict = {}
    for r in runs:
        groups.setdefault(r[key], []).append(r)
    rows = []
    for label, members in groups.items():
        row = {key: label, "n_runs": len(members)}
        for f in COMPARE_FIELDS:
            row[f] = float(np.mean([m[f] for m in members]))
        rows.append(row)
    ratios = []
    for a in rows:
        for b in rows:
            if a is b:
                continue
            entry = {"numerator": a[key], "denominator": b[key]}
            for f in COMPARE_FIELDS:
                entry[f] = a[f] / b[f] if b[f] != 0 else (1.0 if a[f] == 0 else float("inf"))
            ratios.append(entry)
    return {"rows": rows, "ratios": ratios}
