"""Command-line entry point: ``run``, ``compare`` and ``sweep-epsilon``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ExperimentConfig, apply_overrides, dump_config, load_config
from .model import ConfigError, InvariantViolation
from .scheduler import PolicyKind
from .sim import EpisodeResult, run_episode, summarize_comparison

OUT_ENV = "DATASCHE_OUT_DIR"
EXIT_CONFIG = 2
EXIT_VIOLATION = 3

log = logging.getLogger("datasche")


def slot_rows(result: EpisodeResult):
    """Header plus one row per slot for the per-slot CSV export."""
    n, m = result.episode.config.n_sources, result.episode.config.n_workers
    pairs = [(i, j) for i in range(n) for j in range(m)]
    header = (["t", "cost_collect", "cost_offload", "cost_train", "total_q", "total_r"]
              + [f"uploaded_{i}_{j}" for i, j in pairs] + [f"omega_{i}_{j}" for i, j in pairs]
              + ["max_skew_deviation", "starved_count"])
    rows = []
    for t, s in enumerate(result.metrics):
        rows.append([t, s.cost_collect, s.cost_offload, s.cost_train, s.backlog_q_total, s.backlog_r_total]
                    + [float(s.uploaded[i, j]) for i, j in pairs] + [float(s.omega[i, j]) for i, j in pairs]
                    + [s.max_skew_deviation, s.starved_count])
    return header, rows


def write_slots(result: EpisodeResult, path: Path) -> None:
    header, rows = slot_rows(result)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_table(rows: list[dict], path: Path) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def job_key(policy: str, seed: int, epsilon: float | None = None) -> str:
    key = f"{policy}_seed{seed}"
    return key if epsilon is None else f"{key}_eps{epsilon:g}"


def _job(args):
    cfg, policy, seed, epsilon, out_dir = args
    over = {} if epsilon is None else {"epsilon": epsilon}
    result = run_episode(cfg.episode(seed=seed, policy=policy, **over))
    key = job_key(PolicyKind.parse(policy).value, seed, epsilon)
    if out_dir is not None:
        write_slots(result, Path(out_dir) / f"{key}_slots.csv")
        write_json(result.summary, Path(out_dir) / f"{key}_summary.json")
    return result.summary


def run_jobs(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, jobs))


def _seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError("seeds", f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str, key: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(key, "needs at least one value")
    return vals


def resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    seeds = _seeds(args.seed)
    policy = getattr(args, "policy", None)
    if policy is not None and "," in policy:
        policy = None
    return apply_overrides(cfg, horizon=args.horizon, epsilon=args.epsilon, policy=policy, seeds=seeds)


def out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_ENV) or "datasche-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args) -> int:
    cfg = resolve(args)
    out = out_dir(args)
    if args.dump_effective_config:
        dump_config(cfg, out / "effective_config.toml")
    summaries = run_jobs([(cfg, cfg.policy.value, s, None, out) for s in cfg.seeds], args.jobs)
    for s in summaries:
        print(f"{s['policy']} seed={s['seed']} avg_cost={s['time_average_cost']:.6g} "
              f"trained={s['total_trained']:.6g} max_skew={s['max_skew_deviation']:.4f}")
    return 0


def cmd_compare(args) -> int:
    cfg = resolve(args)
    policies = [PolicyKind.parse(p).value for p in args.policies.split(",") if p.strip()]
    if len(policies) < 2:
        raise ConfigError("policies", "compare needs at least two policies")
    out = out_dir(args)
    if args.dump_effective_config:
        dump_config(cfg, out / "effective_config.toml")
    jobs = [(cfg, p, s, None, out) for p in policies for s in cfg.seeds]
    table = summarize_comparison(run_jobs(jobs, args.jobs))
    write_json(table, out / "comparison.json")
    write_table(table["rows"], out / "comparison.csv")
    print_rows(table["rows"], "policy")
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve(args)
    eps_list = _floats(args.eps, "eps")
    policies = [PolicyKind.parse(p).value for p in args.policies.split(",") if p.strip()]
    out = out_dir(args)
    if args.dump_effective_config:
        dump_config(cfg, out / "effective_config.toml")
    jobs = [(cfg, p, s, e, out) for e in eps_list for p in policies for s in cfg.seeds]
    summaries = run_jobs(jobs, args.jobs)
    for s in summaries:
        s["label"] = f"{s['policy']}@{s['epsilon']:g}"
    table = summarize_comparison(summaries, key="label")
    for row in table["rows"]:
        row["policy"], eps = row["label"].split("@")
        row["epsilon"] = float(eps)
    write_json(table, out / "sweep.json")
    write_table(table["rows"], out / "sweep.csv")
    print_rows(table["rows"], "label")
    return 0


def print_rows(rows, key):
    cols = ["time_average_cost", "total_trained", "unit_training_cost", "upload_stdev",
            "max_skew_deviation", "time_average_backlog"]
    print(f"{key:<14}" + "".join(f"{c:>22}" for c in cols))
    for r in rows:
        print(f"{r[key]:<14}" + "".join(f"{r[c]:>22.6g}" for c in cols))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="testbed",
                        help="TOML file, or a bundled name: testbed, sim (default: testbed)")
    common.add_argument("--seed", help="seed or comma-separated seeds (overrides [run].seeds)")
    common.add_argument("--horizon", type=int, help="number of slots")
    common.add_argument("--epsilon", type=float, help="multiplier step size")
    common.add_argument("--out-dir", help=f"output directory (CLI > env:{OUT_ENV} > ./datasche-out)")
    common.add_argument("--dump-effective-config", action="store_true",
                        help="write the merged config as effective_config.toml")
    common.add_argument("--jobs", type=int, default=1, help="parallel episode workers")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="datasche", description="Skew-aware data scheduling simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one policy")
    r.add_argument("--policy", help="ds, lds, no-sdc, no-sdt, no-lsa, odt, odc")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", parents=[common], help="compare policies over seeds")
    c.add_argument("--policies", "--policy", dest="policies", default="ds,no-sdc,no-sdt,no-lsa")
    c.set_defaults(func=cmd_compare)
    s = sub.add_parser("sweep-epsilon", parents=[common], help="sweep the step size")
    s.add_argument("--eps", default="0.1,0.2,0.4,0.8", help="comma-separated step sizes")
    s.add_argument("--policies", "--policy", dest="policies", default="ds,lds")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
