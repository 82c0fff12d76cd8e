"""Rollout and benchmark orchestration, raw logs, and reports.

Directory layout written by `run_benchmark`::

    out/config.json
    out/rollouts/<task>/seed_<seed>/rollout.jsonl   deterministic log
    out/rollouts/<task>/seed_<seed>/timing.json     wall-clock, kept apart
    out/report.md, out/report.json

Every number in a report is recomputed from the rollout logs (and the
timing files for wall time), so `report_from_logs` reproduces it exactly.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .foresight import GeometricPredictor, OraclePredictor
from .observation import save_observation
from .planner import PlannerConfig, RolloutResult, rollout_loop, run_greedy_policy, run_policy
from .proposal import HeuristicScorer, ProposalConfig
from .simulator.metrics import ROTATION_TOL, TRANSLATION_TOL, Z_TOL
from .simulator.oracle import oracle_policy
from .simulator.tasks import TASK_NAMES, get_task, load_task
from .simulator.world import WorldState, render

LOG_SCHEMA_VERSION = 1
ROLLOUT_LOG = "rollout.jsonl"
TIMING_FILE = "timing.json"
METHODS = ("tvf-small", "tvf-large", "tvf", "greedy", "oracle")
FORESIGHTS = ("geometric", "oracle")


class ConfigError(ValueError):
    """Invalid benchmark or rollout configuration."""


def thresholds() -> dict:
    return {
        "translation_m": TRANSLATION_TOL,
        "z_m": Z_TOL,
        "rotation_deg": math.degrees(ROTATION_TOL),
    }


def planner_for(method: str, k: int | None = None, d_max: int | None = None) -> PlannerConfig | None:
    """Planner config for a method name; None for the non-search policies.

    `k` and `d_max` override the preset's values; 'tvf' alone defaults to
    K=3, d_max=1. Schedule names like 'K3-M4-G1' are accepted too.
    """
    m = method.lower()
    if m in ("greedy", "oracle"):
        if k is not None or d_max is not None:
            raise ConfigError(f"method {method!r} takes no --k/--dmax")
        return None
    if m == "tvf-small":
        base = PlannerConfig.tvf_small()
    elif m == "tvf-large":
        base = PlannerConfig.tvf_large()
    elif m == "tvf":
        base = PlannerConfig(d_max=1, proposal=ProposalConfig(k=3))
    else:
        try:
            base = PlannerConfig.from_variant(m)
        except ValueError:
            raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)} or a K#-M#-G# schedule") from None
        if k is not None or d_max is not None:
            raise ConfigError("a K#-M#-G# schedule takes no --k/--dmax")
        return base
    if k is None and d_max is None:
        return base
    k = base.proposal.k if k is None else k
    d_max = base.d_max if d_max is None else d_max
    if k < 1 or d_max < 1:
        raise ConfigError("--k and --dmax must be positive")
    return PlannerConfig(d_max=d_max, proposal=ProposalConfig(k=k, top_n=max(100, k)))


def _check_names(task: str, method: str, foresight: str) -> None:
    if task not in TASK_NAMES:
        raise ConfigError(f"unknown task {task!r}; known: {', '.join(TASK_NAMES)}")
    if foresight not in FORESIGHTS:
        raise ConfigError(f"unknown foresight {foresight!r}; expected one of {', '.join(FORESIGHTS)}")


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def run_rollout(
    task: str,
    method: str = "tvf-small",
    foresight: str = "geometric",
    seed: int = 0,
    k: int | None = None,
    d_max: int | None = None,
    out: str | Path | None = None,
    dump_images: bool = False,
) -> RolloutResult:
    """One episode from a seeded start state; optionally written to `out`."""
    method = method.lower()
    _check_names(task, method, foresight)
    cfg = planner_for(method, k, d_max)
    spec = get_task(task)
    world, goal = load_task(spec, seed)
    scorer = HeuristicScorer()
    if method == "oracle":
        result = rollout_loop(world, goal, lambda w, o_t, o_g: (oracle_policy(w, goal), {}))
    elif method == "greedy":
        result = run_greedy_policy(world, goal, scorer)
    else:
        f = OraclePredictor(world) if foresight == "oracle" else GeometricPredictor(world.calib)
        result = run_policy(world, goal, f, scorer, cfg)
    if out is not None:
        header = {
            "task": task,
            "seed": seed,
            "method": method,
            "foresight": foresight if cfg is not None else None,
            "planner": cfg.to_dict() if cfg is not None else None,
            "n_blocks": spec.n_blocks,
            "max_steps": spec.n_blocks,
            "thresholds": thresholds(),
            "goal": goal.to_dict(),
        }
        write_rollout_log(out, header, result, dump_images)
    return result


def write_rollout_log(out: str | Path, header: dict, result: RolloutResult, dump_images: bool) -> Path:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    lines = [_dump({"schema_version": LOG_SCHEMA_VERSION, "kind": "header", **header})]
    for st in result.steps:
        rec = {"schema_version": LOG_SCHEMA_VERSION, "kind": "step", **st}
        if dump_images:
            names = [f"obs_{st['step']:03d}_rgb.png", f"obs_{st['step']:03d}_height.png"]
            save_observation(render(WorldState.from_dict(st["world"])), d / names[0], d / names[1])
            rec["obs"] = names
        lines.append(_dump(rec))
    final = {
        "schema_version": LOG_SCHEMA_VERSION,
        "kind": "final",
        "success": bool(result.success),
        "progress": result.progress,
        "n_steps": result.n_steps,
        "failure": result.failure,
        "world": result.final_world.to_dict(),
    }
    if dump_images:
        final["obs"] = ["obs_final_rgb.png", "obs_final_height.png"]
        save_observation(render(result.final_world), d / final["obs"][0], d / final["obs"][1])
    lines.append(_dump(final))
    (d / ROLLOUT_LOG).write_text("\n".join(lines) + "\n")
    (d / TIMING_FILE).write_text(json.dumps({"step_seconds": result.step_times}) + "\n")
    return d


def read_rollout_log(path: str | Path) -> list[dict]:
    p = Path(path)
    if p.is_dir():
        p = p / ROLLOUT_LOG
    recs = [json.loads(line) for line in p.read_text().splitlines() if line.strip()]
    for r in recs:
        if r.get("schema_version") != LOG_SCHEMA_VERSION:
            raise ValueError(f"{p}: unsupported log schema {r.get('schema_version')}")
    return recs


# --- benchmark --------------------------------------------------------------


@dataclass
class BenchmarkConfig:
    tasks: list[str]
    rollouts_per_task: int = 20
    seeds: list[int] | None = None  # default 0 .. rollouts_per_task-1
    method: str = "tvf-small"
    foresight: str = "geometric"
    k: int | None = None
    d_max: int | None = None
    out_dir: str = "bench_out"
    dump_images: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.seeds is None:
            self.seeds = list(range(self.rollouts_per_task))

    def validate(self) -> None:
        if not self.tasks:
            raise ConfigError("no tasks given")
        for t in self.tasks:
            _check_names(t, self.method, self.foresight)
        if self.rollouts_per_task < 1:
            raise ConfigError("rollouts_per_task must be at least 1")
        if len(self.seeds) != self.rollouts_per_task or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be rollouts_per_task distinct integers")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        planner_for(self.method, self.k, self.d_max)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> BenchmarkConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_json(cls, path: str | Path) -> BenchmarkConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def rollout_dir(out_dir: str | Path, task: str, seed: int) -> Path:
    return Path(out_dir) / "rollouts" / task / f"seed_{seed}"


def _bench_job(args) -> None:
    cfg, task, seed, out_dir = args
    run_rollout(task, cfg.method, cfg.foresight, seed, cfg.k, cfg.d_max, rollout_dir(out_dir, task, seed), cfg.dump_images)


@dataclass
class TaskRow:
    task: str
    n: int
    success_rate: float  # percent
    progress_rate: float  # percent
    mean_step_seconds: float


@dataclass
class BenchmarkReport:
    rows: list[TaskRow]
    config: dict
    thresholds: dict = field(default_factory=thresholds)

    @property
    def mean_success(self) -> float:
        return sum(r.success_rate for r in self.rows) / len(self.rows)

    @property
    def mean_progress(self) -> float:
        return sum(r.progress_rate for r in self.rows) / len(self.rows)

    def to_dict(self) -> dict:
        return {
            "schema_version": LOG_SCHEMA_VERSION,
            "rows": [asdict(r) for r in self.rows],
            "mean_success_rate": self.mean_success,
            "mean_progress_rate": self.mean_progress,
            "config": self.config,
            "thresholds": self.thresholds,
        }

    def to_markdown(self) -> str:
        """Methods as rows, tasks as columns; cells are success / progress in percent."""
        method = self.config.get("method", "?")
        if self.config.get("method") not in ("greedy", "oracle"):
            method += f" ({self.config.get('foresight')} foresight)"
        names = [r.task for r in self.rows]
        head = "| method | " + " | ".join(names) + " | mean |"
        sep = "|---|" + "---|" * (len(names) + 1)
        cells = [f"{r.success_rate:.1f} / {r.progress_rate:.1f}" for r in self.rows]
        row = f"| {method} | " + " | ".join(cells) + f" | {self.mean_success:.1f} / {self.mean_progress:.1f} |"
        timing = "| step time (s) | " + " | ".join(f"{r.mean_step_seconds:.3f}" for r in self.rows) + " | |"
        th = self.thresholds
        return "\n".join(
            [
                "Success rate (%) / rate of progress (%)",
                "",
                head,
                sep,
                row,
                timing,
                "",
                f"Rollouts per task: {self.rows[0].n}. Success thresholds: translation < {th['translation_m'] * 100:g} cm, "
                f"|dz| < {th['z_m'] * 100:g} cm, rotation < {th['rotation_deg']:g} deg.",
                "",
            ]
        )


def report_from_logs(out_dir: str | Path) -> BenchmarkReport:
    """Rebuild a report from raw logs only."""
    out = Path(out_dir)
    cfg = json.loads((out / "config.json").read_text())
    rows = []
    for task in cfg["tasks"]:
        succ, prog, times = [], [], []
        for seed in cfg["seeds"]:
            d = rollout_dir(out, task, seed)
            final = next(r for r in read_rollout_log(d) if r["kind"] == "final")
            succ.append(1.0 if final["success"] else 0.0)
            prog.append(final["progress"])
            tp = d / TIMING_FILE
            if tp.exists():
                times.extend(json.loads(tp.read_text())["step_seconds"])
        n = len(succ)
        rows.append(
            TaskRow(task, n, 100.0 * sum(succ) / n, 100.0 * sum(prog) / n, sum(times) / len(times) if times else 0.0)
        )
    return BenchmarkReport(rows, cfg)


def write_report(report: BenchmarkReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "report.md").write_text(report.to_markdown())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def run_benchmark(cfg: BenchmarkConfig) -> BenchmarkReport:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    jobs = [(cfg, t, s, str(out)) for t in cfg.tasks for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            list(pool.map(_bench_job, jobs))
    else:
        for j in jobs:
            _bench_job(j)
    report = report_from_logs(out)
    write_report(report, out)
    return report
