"""Offline checks of foresight models: fidelity on demos and SE(2) equivariance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .foresight import ForesightPredictor, GeometricPredictor, equivariance_residual
from .geometry import N_ROTATIONS, PoseSE2, WorkspaceCalib, rotation_about, world_to_pixel
from .observation import DEFAULT_MASK_SIDE, UNIT_WEIGHTS, l1_distance
from .simulator.oracle import oracle_policy, sample_random_action
from .simulator.tasks import TASK_NAMES, get_task, load_task
from .simulator.world import apply_action, render

FIDELITY_THRESHOLD = 0.02


def squares_disjoint(p, q, side: int = DEFAULT_MASK_SIDE) -> bool:
    """True when the side x side squares centred at pixels p and q share no pixel."""
    return abs(p.u - q.u) >= side or abs(p.v - q.v) >= side


@dataclass(frozen=True)
class FidelityRecord:
    task: str
    seed: int
    step: int
    disjoint: bool
    l1: float


def foresight_fidelity(
    episodes, f: ForesightPredictor | None = None, side: int = DEFAULT_MASK_SIDE, calib: WorkspaceCalib | None = None
) -> list[FidelityRecord]:
    """Unit-weight L1 between predicted and recorded next observations.

    Height is normalised by the tallest column of the episode's final
    (goal-reaching) observation. Every transition is scored; `disjoint`
    marks the ones whose pick and place squares do not overlap.
    """
    calib = calib or WorkspaceCalib()
    f = f or GeometricPredictor(calib, mask_side=side)
    out = []
    for ep in episodes:
        scale = float(ep.final_observation.height.max()) or 1.0
        for i, s in enumerate(ep.transitions()):
            p, q = world_to_pixel(calib, s.action.pick), world_to_pixel(calib, s.action.place)
            pred = f.predict(s.before, s.action)
            out.append(FidelityRecord(ep.task, ep.seed, i, squares_disjoint(p, q, side), l1_distance(pred, s.after, UNIT_WEIGHTS, scale)))
    return out


def fidelity_table(records: list[FidelityRecord], threshold: float = FIDELITY_THRESHOLD) -> dict[str, dict]:
    """Per-task summary over disjoint transitions, plus an 'all' row."""
    rows = {}
    groups: dict[str, list[float]] = {}
    for r in records:
        if r.disjoint:
            groups.setdefault(r.task, []).append(r.l1)
    every = [x for v in groups.values() for x in v]
    for name, vals in [*sorted(groups.items()), ("all", every)]:
        a = np.asarray(vals, dtype=np.float64)
        rows[name] = {
            "n": int(a.size),
            "mean_l1": float(a.mean()) if a.size else float("nan"),
            "max_l1": float(a.max()) if a.size else float("nan"),
            "frac_within": float((a <= threshold).mean()) if a.size else float("nan"),
        }
    return rows


def fidelity_markdown(table: dict[str, dict], threshold: float = FIDELITY_THRESHOLD) -> str:
    names = list(table)
    lines = [
        f"Geometric foresight vs ground truth (unit-weight L1, disjoint pick/place squares, threshold {threshold})",
        "",
        "| metric | " + " | ".join(names) + " |",
        "|---|" + "---|" * len(names),
        "| transitions | " + " | ".join(str(table[n]["n"]) for n in names) + " |",
        "| mean L1 | " + " | ".join(f"{table[n]['mean_l1']:.5f}" for n in names) + " |",
        "| max L1 | " + " | ".join(f"{table[n]['max_l1']:.5f}" for n in names) + " |",
        f"| % <= {threshold} | " + " | ".join(f"{100 * table[n]['frac_within']:.1f}" for n in names) + " |",
    ]
    return "\n".join(lines) + "\n"


# --- equivariance ----------------------------------------------------------


@dataclass(frozen=True)
class EquivarianceCase:
    index: int
    task: str
    seed: int
    kind: str  # "translation" or "rotation"
    shift_u: int
    shift_v: int
    rot_bins: int
    residual: float


def _in_margin(calib: WorkspaceCalib, pose: PoseSE2, margin: int) -> bool:
    fu, fv = calib.world_to_continuous(pose.x, pose.y)
    return margin <= fu <= calib.H - 1 - margin and margin <= fv <= calib.W - 1 - margin


def sample_equivariance_case(
    rng: np.random.Generator,
    index: int,
    kind: str,
    calib: WorkspaceCalib | None = None,
    f: ForesightPredictor | None = None,
    n_rotations: int = N_ROTATIONS,
    margin: int = DEFAULT_MASK_SIDE // 2 + 1,
    max_tries: int = 1000,
) -> EquivarianceCase:
    """Draw one (observation, action, motion) triple and measure the residual.

    The observation is a task's start state, optionally after one random
    move; the action is the scripted expert's next move. Translations are
    whole pixels; rotations are whole bins about a random pixel centre.
    Motions that push the pick or place square off the raster are redrawn.
    """
    calib = calib or WorkspaceCalib()
    f = f or GeometricPredictor(calib)
    for _ in range(max_tries):
        task = TASK_NAMES[int(rng.integers(len(TASK_NAMES)))]
        seed = int(rng.integers(1 << 30))
        world, goal = load_task(get_task(task), seed)
        if rng.random() < 0.5:
            world = apply_action(world, sample_random_action(world, (seed, 31)))
        a = oracle_policy(world, goal)
        if kind == "translation":
            du, dv = (int(x) for x in rng.integers(-40, 41, size=2))
            g = PoseSE2(du * calib.pixel_pitch, dv * calib.pixel_pitch, 0.0)
            k = 0
        elif kind == "rotation":
            du = dv = 0
            k = int(rng.integers(1, n_rotations))
            cu, cv = (int(x) for x in rng.integers(margin, calib.H - margin, size=2))
            g = rotation_about(calib.continuous_to_world(cu, cv), 2.0 * math.pi * k / n_rotations)
        else:
            raise ValueError(f"unknown motion kind {kind!r}")
        ga = a.transformed(g)
        if not all(_in_margin(calib, p, margin) for p in (a.pick, a.place, ga.pick, ga.place)):
            continue
        o = render(world)
        scale = float(render(goal).height.max()) or 1.0
        r = equivariance_residual(f, o, a, g, calib, height_scale=scale)
        return EquivarianceCase(index, task, seed, kind, du, dv, k, r)
    raise RuntimeError("could not draw an in-bounds equivariance case")


def equivariance_cases(n: int, seed: int = 0, calib: WorkspaceCalib | None = None) -> list[EquivarianceCase]:
    """n cases alternating translation and rotation, all drawn from one seed."""
    rng = np.random.default_rng(seed)
    kinds = ("translation", "rotation")
    return [sample_equivariance_case(rng, i, kinds[i % 2], calib) for i in range(n)]


__all__ = [
    "EquivarianceCase",
    "FIDELITY_THRESHOLD",
    "FidelityRecord",
    "equivariance_cases",
    "fidelity_markdown",
    "fidelity_table",
    "foresight_fidelity",
    "sample_equivariance_case",
    "squares_disjoint",
]
