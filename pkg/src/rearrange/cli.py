"""Command-line entry point: `rearrange <subcommand> ...`."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

from . import __version__


def _cmd_rollout(args) -> int:
    from .bench import run_rollout

    out = args.out or f"runs/{args.task}_{args.method}_{args.foresight}_seed{args.seed}"
    r = run_rollout(args.task, args.method, args.foresight, args.seed, args.k, args.dmax, out, args.dump_images)
    status = "success" if r.success else "failure"
    extra = f" ({r.failure})" if r.failure else ""
    print(f"{args.task} seed {args.seed}: {status} in {r.n_steps} steps, progress {r.progress:.3f}{extra}; log in {out}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import BenchmarkConfig, run_benchmark

    if args.config == "smoke":
        text = resources.files("rearrange").joinpath("data", "smoke.json").read_text()
        cfg = BenchmarkConfig.from_dict(json.loads(text))
    else:
        cfg = BenchmarkConfig.from_json(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.workers:
        cfg.workers = args.workers
    report = run_benchmark(cfg)
    print(report.to_markdown(), end="")
    print(f"report written to {Path(cfg.out_dir) / 'report.md'}")
    return 0


def _cmd_demos(args) -> int:
    from .simulator.episodes import save_episode
    from .simulator.oracle import record_demo
    from .simulator.tasks import get_task

    spec = get_task(args.task)
    root = Path(args.out)
    for i in range(args.count):
        seed = args.seed + i
        ep = record_demo(spec, seed, n_random=args.random_steps)
        save_episode(ep, root / f"{spec.name}_seed{seed:05d}", dump_images=args.dump_images)
    print(f"wrote {args.count} {spec.name} episodes to {root}")
    return 0


def _cmd_foresight_eval(args) -> int:
    from .evaluation import fidelity_markdown, fidelity_table, foresight_fidelity
    from .simulator.episodes import find_episodes, load_episode

    dirs = find_episodes(args.demos)
    if not dirs:
        raise FileNotFoundError(f"no episodes under {args.demos}")
    records = foresight_fidelity(load_episode(d) for d in dirs)
    table = fidelity_table(records, args.threshold)
    md = fidelity_markdown(table, args.threshold)
    print(md, end="")
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_equivariance(args) -> int:
    from .evaluation import equivariance_cases

    cases = equivariance_cases(args.samples, args.seed)
    fields = ["index", "task", "seed", "kind", "shift_u", "shift_v", "rot_bins", "residual"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(fields)
        for c in cases:
            w.writerow([getattr(c, k) for k in fields[:-1]] + [repr(c.residual)])
    finally:
        if args.out:
            fh.close()
    tr = [c.residual for c in cases if c.kind == "translation"]
    ro = [c.residual for c in cases if c.kind == "rotation"]
    print(
        f"translation max {max(tr, default=0.0):.3g}, rotation mean {sum(ro) / max(len(ro), 1):.3g} max {max(ro, default=0.0):.3g}",
        file=sys.stderr,
    )
    return 0


def _cmd_viz_qmaps(args) -> int:
    from .viz import qmap_figure

    out = args.out or f"qmaps_{args.task}_seed{args.seed}.png"
    qmap_figure(args.task, args.seed, out, k=args.k)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rearrange", description="Tabletop rearrangement planning toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rollout", help="run one episode and write its log")
    r.add_argument("--task", required=True)
    r.add_argument("--method", default="tvf-small", help="tvf-small, tvf-large, tvf, greedy, oracle, or K#-M#-G#")
    r.add_argument("--foresight", default="geometric", choices=["geometric", "oracle"])
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--dmax", type=int, default=None)
    r.add_argument("--k", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--dump-images", action=argparse.BooleanOptionalAction, default=True)
    r.set_defaults(func=_cmd_rollout)

    b = sub.add_parser("bench", help="run a benchmark from a JSON config")
    b.add_argument("--config", required=True, help="path to a JSON config, or 'smoke' for the shipped one")
    b.add_argument("--out", default=None, help="override the config's out_dir")
    b.add_argument("--workers", type=int, default=None)
    b.set_defaults(func=_cmd_bench)

    d = sub.add_parser("demos", help="record scripted-expert episodes")
    d.add_argument("--task", required=True)
    d.add_argument("--count", type=int, default=10)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", default="demos")
    d.add_argument("--random-steps", type=int, default=2)
    d.add_argument("--dump-images", action=argparse.BooleanOptionalAction, default=True)
    d.set_defaults(func=_cmd_demos)

    f = sub.add_parser("foresight-eval", help="geometric foresight L1 table against recorded demos")
    f.add_argument("--demos", required=True)
    f.add_argument("--threshold", type=float, default=0.02)
    f.add_argument("--out", default=None, help="optional JSON output")
    f.set_defaults(func=_cmd_foresight_eval)

    e = sub.add_parser("equivariance", help="equivariance residuals as CSV")
    e.add_argument("--samples", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    e.set_defaults(func=_cmd_equivariance)

    v = sub.add_parser("viz-qmaps", help="overlay pick/place value maps and proposals on a start state")
    v.add_argument("--task", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--k", type=int, default=3)
    v.add_argument("--out", default=None)
    v.set_defaults(func=_cmd_viz_qmaps)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
