"""Experiment configuration: TOML in, TOML out.

A config file has four tables: ``[framework]`` (the :class:`FrameworkConfig`
fields), ``[trace]`` (the :class:`TraceSpec` fields), ``[scheduler]``
(``sigma0``, ``sigma_power``) and ``[run]`` (``policy``, ``seeds``). Missing
framework keys are an error; everything else has a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .model import ConfigError, FrameworkConfig
from .scheduler import PolicyKind
from .sim import Episode, TraceSpec

REQUIRED = ("n_sources", "n_workers", "rho", "zeta", "delta", "epsilon")
BUNDLED = ("testbed", "sim")


@dataclass
class ExperimentConfig:
    framework: FrameworkConfig
    trace: TraceSpec = field(default_factory=TraceSpec)
    sigma0: float = 1.0
    sigma_power: float = 1.0
    policy: PolicyKind = PolicyKind.DS
    seeds: list[int] = field(default_factory=lambda: [1])

    def episode(self, seed: int | None = None, policy=None, **framework_overrides) -> Episode:
        cfg = self.framework.with_overrides(**framework_overrides) if framework_overrides else self.framework
        return Episode(cfg, self.trace, self.seeds[0] if seed is None else int(seed),
                       self.policy if policy is None else PolicyKind.parse(policy), self.sigma0, self.sigma_power)

    def to_dict(self) -> dict:
        trace = dataclasses.asdict(self.trace)
        if trace["load_file"] is None:
            del trace["load_file"]
        return {
            "framework": dataclasses.asdict(self.framework),
            "trace": trace,
            "scheduler": {"sigma0": self.sigma0, "sigma_power": self.sigma_power},
            "run": {"policy": self.policy.value, "seeds": list(self.seeds)},
        }


def _fields(cls) -> dict:
    return {f.name: f for f in dataclasses.fields(cls)}


def _coerce(section: str, key: str, value, kind):
    try:
        if kind in ("int", int):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if kind in ("float", float):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}") from None
    return value


def _build(cls, section: str, data: dict, required=()):
    known = _fields(cls)
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown key")
    for key in required:
        if key not in data:
            raise ConfigError(key, f"missing from [{section}]")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(section, key, value, known[key].type)
    return cls(**kwargs)


def from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - {"framework", "trace", "scheduler", "run"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown table")
    framework = _build(FrameworkConfig, "framework", raw.get("framework", {}), REQUIRED)
    trace = _build(TraceSpec, "trace", raw.get("trace", {}))
    sched = dict(raw.get("scheduler", {}))
    run = dict(raw.get("run", {}))
    for key in set(sched) - {"sigma0", "sigma_power"}:
        raise ConfigError(f"scheduler.{key}", "unknown key")
    for key in set(run) - {"policy", "seeds"}:
        raise ConfigError(f"run.{key}", "unknown key")
    sigma0 = _coerce("scheduler", "sigma0", sched.get("sigma0", 1.0), float)
    power = _coerce("scheduler", "sigma_power", sched.get("sigma_power", 1.0), float)
    if sigma0 <= 0:
        raise ConfigError("scheduler.sigma0", "must be > 0")
    if not 0.5 < power <= 1.0:
        raise ConfigError("scheduler.sigma_power", "must lie in (0.5, 1]")
    try:
        policy = PolicyKind.parse(run.get("policy", "ds"))
    except ValueError as exc:
        raise ConfigError("run.policy", str(exc)) from None
    seeds = run.get("seeds", [1])
    if isinstance(seeds, int):
        seeds = [seeds]
    seeds = [_coerce("run", "seeds", s, int) for s in seeds]
    if not seeds:
        raise ConfigError("run.seeds", "need at least one seed")
    return ExperimentConfig(framework, trace, sigma0, power, policy, seeds)


def load_config(path) -> ExperimentConfig:
    """Read a TOML file; ``path`` may also name a bundled config (``testbed``, ``sim``)."""
    text = None
    name = str(path)
    if name.endswith(".toml") and not Path(name).exists() and Path(name).stem in BUNDLED:
        name = Path(name).stem
    if name in BUNDLED:
        text = resources.files("datasche.configs").joinpath(f"{name}.toml").read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"cannot read {path}")
        text = p.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    return from_dict(raw)


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = tomli_w.dumps(cfg.to_dict())
    if path is not None:
        Path(path).write_text(text)
    return text


def apply_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Command-line overrides; ``None`` values are ignored."""
    kw = {k: v for k, v in kw.items() if v is not None}
    fw = {k: kw.pop(k) for k in list(kw) if k in _fields(FrameworkConfig)}
    raw = cfg.to_dict()
    raw["framework"].update(fw)
    if "policy" in kw:
        raw["run"]["policy"] = PolicyKind.parse(kw.pop("policy")).value
    if "seeds" in kw:
        raw["run"]["seeds"] = list(kw.pop("seeds"))
    if kw:
        raise ConfigError(sorted(kw)[0], "not an overridable key")
    return from_dict(raw)
