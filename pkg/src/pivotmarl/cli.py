"""Experiment harness: seeded runs, CSV metrics, and aggregate reports.

A run executes the interact / remember / train loop for each seed and writes
one CSV per seed with the evaluation curve. ``report`` aggregates finished
runs into mean-and-spread summaries. Config comes from flat key=value files
with command-line overrides; identical configs reproduce byte-identical
CSVs.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import PRESETS, make_env
from .envs.base import collective_truth, ground_truth_pivot, is_offbeat_reward
from .search import search_pivot_timesteps
from .training import Trainer, TrainerConfig

CSV_HEADER = "step,seed,mean_eval_return,success_rate,pivot_accuracy,wall_clock_s"


@dataclass(frozen=True)
class RunConfig:
    env: str = "stag-hunter"
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    total_steps: int = 500_000
    eval_interval: int = 10_000
    eval_episodes: int = 16
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs/default"
    workers: int = 1
    timing: bool = False  # wall-clock column stays 0.0 unless enabled

    def validate(self) -> None:
        if self.env not in PRESETS:
            raise ValueError(f"unknown environment preset {self.env!r}")
        if self.total_steps < 1 or self.eval_interval < 1 or self.eval_episodes < 1:
            raise ValueError("steps, eval interval and eval episodes must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")
        self.trainer.validate()


@dataclass
class MetricsRow:
    step: int
    seed: int
    mean_eval_return: float
    success_rate: float
    pivot_accuracy: float | None
    wall_clock_s: float

    def to_csv(self) -> str:
        acc = "" if self.pivot_accuracy is None else f"{self.pivot_accuracy:.4f}"
        return (
            f"{self.step},{self.seed},{self.mean_eval_return:.4f},"
            f"{self.success_rate:.4f},{acc},{self.wall_clock_s:.3f}"
        )


def measure_pivot_accuracy(trainer: Trainer, max_rewards: int = 200) -> float | None:
    """Search accuracy against the causality oracle, over the delayed
    (off-schedule) rewards of the most recently collected episodes."""
    if trainer.memory is None:
        return None
    correct = 0
    total = 0
    for episode in reversed(trainer.buffer.recent(64)):
        truth = ground_truth_pivot(episode)
        offbeat_ts = [t for t, c in truth.items() if is_offbeat_reward(c, t)]
        if not offbeat_ts:
            continue
        kappa = search_pivot_timesteps(
            episode,
            trainer.memory,
            scheme=trainer.config.memory_scheme,
            path_cap=trainer.config.path_cap,
        )
        for t in offbeat_ts:
            total += 1
            if kappa.get(t) == collective_truth(truth[t], t):
                correct += 1
        if total >= max_rewards:
            break
    return correct / total if total else None


def run_single_seed(config: RunConfig, seed: int) -> list[MetricsRow]:
    env = make_env(config.env, seed=seed)
    trainer = Trainer(env, config.trainer, seed=seed)
    rows: list[MetricsRow] = []
    started = time.perf_counter()
    next_eval = config.eval_interval

    def do_eval() -> None:
        mean_return, success = trainer.evaluate(config.eval_episodes)
        accuracy = measure_pivot_accuracy(trainer)
        elapsed = time.perf_counter() - started if config.timing else 0.0
        rows.append(
            MetricsRow(trainer.env_steps, seed, mean_return, success, accuracy, elapsed)
        )

    while trainer.env_steps < config.total_steps:
        epsilon = config.trainer.epsilon(trainer.env_steps)
        trainer.run_episode(epsilon)
        if (
            trainer.episodes % config.trainer.train_interval_episodes == 0
            and len(trainer.buffer) >= config.trainer.batch_size
        ):
            trainer.train_step()
        if trainer.env_steps >= next_eval:
            do_eval()
            while next_eval <= trainer.env_steps:
                next_eval += config.eval_interval
    do_eval()  # final point
    return rows


def _seed_job(payload: tuple[RunConfig, int]) -> tuple[int, list[MetricsRow]]:
    config, seed = payload
    return seed, run_single_seed(config, seed)


def run(config: RunConfig) -> Path:
    """Execute all seeds and write one CSV per seed; returns the run dir."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config, seed) for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = dict(pool.map(_seed_job, jobs))
    else:
        results = dict(map(_seed_job, jobs))
    for seed in config.seeds:
        lines = [CSV_HEADER] + [r.to_csv() for r in results[seed]]
        (out / f"seed{seed}.csv").write_text("\n".join(lines) + "\n")
    (out / "config.txt").write_text(format_config(config))
    return out


def format_config(config: RunConfig) -> str:
    t = config.trainer
    target = t.target_estimator
    if target == "nstep":
        target = f"nstep:{t.nstep_n}"
    elif target == "tdlambda":
        target = f"tdlambda:{t.td_lambda:g}"
    pairs = {
        "env": config.env,
        "learner": t.learner,
        "memory": t.memory_scheme,
        "target": target,
        "seeds": ",".join(str(s) for s in config.seeds),
        "steps": config.total_steps,
        "eval-interval": config.eval_interval,
        "eval-episodes": config.eval_episodes,
        "train-interval": t.train_interval_episodes,
        "batch-size": t.batch_size,
        "buffer": t.buffer_capacity,
        "lr": t.learning_rate,
        "gamma": t.gamma,
        "beta": t.beta,
        "eps-anneal": t.eps_anneal_steps,
        "target-sync": t.target_sync_interval,
        "out": config.out_dir,
    }
    return "".join(f"{k}={v}\n" for k, v in pairs.items())


# --- reporting -----------------------------------------------------------------


def final_success_rates(run_dir: Path) -> dict[int, float]:
    """Per-seed success rate at the last evaluation point."""
    rates: dict[int, float] = {}
    for csv_path in sorted(run_dir.glob("seed*.csv")):
        lines = [ln for ln in csv_path.read_text().splitlines() if ln.strip()]
        if len(lines) < 2:
            continue
        last = lines[-1].split(",")
        rates[int(last[1])] = float(last[3])
    return rates


def summary_string(values: list[float]) -> str:
    """Mean-std percentage in the compact reporting format, e.g. 100±0%."""
    arr = np.asarray(values, dtype=float) * 100.0
    return f"{arr.mean():g}±{arr.std():g}%"


def report(base_dir: Path) -> str:
    """Aggregate every run directory under base_dir into a summary table."""
    base = Path(base_dir)
    run_dirs = sorted({p.parent for p in base.glob("**/seed*.csv")})
    if not run_dirs:
        raise FileNotFoundError(f"no completed runs under {base}")
    lines = []
    for run_dir in run_dirs:
        rates = final_success_rates(run_dir)
        if not rates:
            continue
        label = str(run_dir.relative_to(base)) if run_dir != base else run_dir.name
        lines.append(f"{label} {summary_string(list(rates.values()))} ({len(rates)} seeds)")
    return "\n".join(lines) + "\n"


# --- argument handling -----------------------------------------------------------


def parse_target(spec: str) -> tuple[str, dict]:
    if spec == "legem":
        return "legem", {}
    if spec == "1step":
        return "1step", {}
    if spec.startswith("nstep:"):
        return "nstep", {"nstep_n": int(spec.split(":", 1)[1])}
    if spec.startswith("tdlambda:"):
        return "tdlambda", {"td_lambda": float(spec.split(":", 1)[1])}
    raise ValueError(f"bad --target {spec!r}; use legem|1step|nstep:N|tdlambda:L")


def parse_seeds(spec: str) -> tuple[int, ...]:
    # either a count ("10" -> seeds 0..9) or an explicit comma list ("3,5,8")
    if "," in spec:
        return tuple(int(s) for s in spec.split(",") if s != "")
    return tuple(range(int(spec)))


def load_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(Path(args.config)) if args.config else {}

    def pick(flag: str, key: str, default):
        cli = getattr(args, flag)
        if cli is not None:
            return cli
        if key in file_values:
            return file_values[key]
        return default

    target_spec = str(pick("target", "target", "legem"))
    estimator, extra = parse_target(target_spec)
    trainer = TrainerConfig(
        learner=str(pick("learner", "learner", "vdn")),
        target_estimator=estimator,
        memory_scheme=str(pick("memory", "memory", "scheme1")),
        gamma=float(pick("gamma", "gamma", 0.99)),
        beta=float(pick("beta", "beta", 1e-5)),
        learning_rate=float(pick("lr", "lr", 0.5)),
        batch_size=int(pick("batch_size", "batch-size", 32)),
        buffer_capacity=int(pick("buffer", "buffer", 5_000)),
        target_sync_interval=int(pick("target_sync", "target-sync", 200)),
        train_interval_episodes=int(pick("train_interval", "train-interval", 1)),
        eps_anneal_steps=int(pick("eps_anneal", "eps-anneal", 50_000)),
        **extra,
    )
    seeds_spec = pick("seeds", "seeds", "1")
    seeds = parse_seeds(str(seeds_spec))
    return RunConfig(
        env=str(pick("env", "env", "stag-hunter")),
        trainer=trainer,
        total_steps=int(pick("steps", "steps", 500_000)),
        eval_interval=int(pick("eval_interval", "eval-interval", 10_000)),
        eval_episodes=int(pick("eval_episodes", "eval-episodes", 16)),
        seeds=seeds,
        out_dir=str(pick("out", "out", "runs/default")),
        workers=int(pick("workers", "workers", 1)),
        timing=bool(args.timing),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pivotmarl")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train over one or more seeds")
    run_p.add_argument("--config", help="flat key=value config file")
    run_p.add_argument("--env", choices=sorted(PRESETS))
    run_p.add_argument("--learner", choices=("iql", "vdn"))
    run_p.add_argument("--memory", choices=("scheme1", "scheme2", "off"))
    run_p.add_argument("--target", help="legem|1step|nstep:N|tdlambda:L")
    run_p.add_argument("--seeds", help="count (10) or explicit list (0,3,7)")
    run_p.add_argument("--steps", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--beta", type=float)
    run_p.add_argument("--gamma", type=float)
    run_p.add_argument("--eps-anneal", dest="eps_anneal", type=int)
    run_p.add_argument("--lr", type=float)
    run_p.add_argument("--batch-size", dest="batch_size", type=int)
    run_p.add_argument("--buffer", type=int)
    run_p.add_argument("--target-sync", dest="target_sync", type=int)
    run_p.add_argument("--train-interval", dest="train_interval", type=int)
    run_p.add_argument("--eval-interval", dest="eval_interval", type=int)
    run_p.add_argument("--eval-episodes", dest="eval_episodes", type=int)
    run_p.add_argument("--workers", type=int)
    run_p.add_argument("--timing", action="store_true", help="record wall-clock times")

    report_p = sub.add_parser("report", help="aggregate finished runs")
    report_p.add_argument("dir", type=Path)

    args = parser.parse_args(argv)
    if args.command == "run":
        config = build_run_config(args)
        out = run(config)
        print(f"wrote {len(config.seeds)} seed series to {out}")
        return 0
    if args.command == "report":
        try:
            print(report(args.dir), end="")
        except FileNotFoundError as exc:
            print(str(exc), file=sys.stderr)
            return 1
        return 0
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
