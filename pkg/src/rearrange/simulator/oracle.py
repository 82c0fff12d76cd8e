"""Scripted expert, random perturbation actions, and demo recording."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import TAU, PickPlaceAction, PoseSE2, angle_distance
from ..observation import Observation
from .metrics import Z_TOL, best_assignment, check_success
from .tasks import TaskSpec, load_task, sample_free_pose
from .world import BlockState, WorldState, apply_action, render

RANDOM_PLACE_MARGIN = 0.02  # m kept free along the workspace border


class OracleError(RuntimeError):
    """The scripted expert has no legal move."""


def _closest_equivalent(theta_from: float, theta_to: float, period: float | None) -> float:
    """Rotation taking theta_from to the nearest symmetric copy of theta_to."""
    if period is None:
        return 0.0
    d = math.remainder(theta_to - theta_from, period)
    return d


def oracle_action_for(block: BlockState, slot: BlockState) -> PickPlaceAction:
    dtheta = _closest_equivalent(block.pose.theta, slot.pose.theta, block.footprint.symmetry_period)
    pick = PoseSE2(block.pose.x, block.pose.y, 0.0)
    return PickPlaceAction(pick, PoseSE2(slot.pose.x, slot.pose.y, dtheta))


def oracle_policy(world: WorldState, goal: WorldState) -> PickPlaceAction:
    """Move a block into the lowest unfilled goal slot.

    Slots are tried in (z, id) order; for a slot, the nearest clear block
    of the same kind that is not already in place is grasped at its centre.
    A move is legal when the block would land at the slot's height.
    """
    if check_success(world, goal):
        raise ValueError("oracle_policy called on an already successful world")
    placed = best_assignment(world, goal)
    used = set(placed.values())
    open_slots = sorted((s for s in goal.blocks if s.id not in placed), key=lambda s: (round(s.z, 6), s.id))
    for slot in open_slots:
        cands = [
            b
            for b in world.blocks
            if b.id not in used and b.kind == slot.kind and world.is_clear(b)
        ]
        cands.sort(key=lambda b: (math.hypot(b.pose.x - slot.pose.x, b.pose.y - slot.pose.y), b.id))
        for b in cands:
            a = oracle_action_for(b, slot)
            moved = apply_action(world, a).block(b.id)
            if abs(moved.z - slot.z) < Z_TOL:
                return a
    raise OracleError("no remaining goal slot can be filled")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_random_action(world: WorldState, seed, keepout=()) -> PickPlaceAction:
    """Pick a uniformly chosen clear block at its centre; place it at a free pose.

    The placement lands on bare table, keeps SPAWN clearance from every other
    block and from the `keepout` polygons, and has a uniform orientation.
    """
    rng = _rng(seed)
    clear = [b for b in world.blocks if world.is_clear(b)]
    if not clear:
        raise ValueError("no block to pick")
    b = clear[int(rng.integers(len(clear)))]
    ext = world.calib.extent
    region = (
        world.calib.origin[0] + RANDOM_PLACE_MARGIN,
        world.calib.origin[1] + RANDOM_PLACE_MARGIN,
        world.calib.origin[0] + ext[0] - RANDOM_PLACE_MARGIN,
        world.calib.origin[1] + ext[1] - RANDOM_PLACE_MARGIN,
    )
    obstacles = [o.polygon() for o in world.blocks if o.id != b.id] + list(keepout)
    target = sample_free_pose(rng, b.footprint, region, obstacles)
    pick = PoseSE2(b.pose.x, b.pose.y, 0.0)
    dtheta = math.remainder(target.theta - b.pose.theta, TAU)
    return PickPlaceAction(pick, PoseSE2(target.x, target.y, dtheta))


@dataclass(frozen=True, eq=False)
class Episode:
    """(o_t, a_t) pairs plus the final (goal-reaching) observation."""

    task: str
    seed: int
    steps: tuple[tuple[Observation, PickPlaceAction], ...]
    final_observation: Observation
    worlds: tuple[WorldState, ...] = ()  # world before each step, then the final world
    n_random: int = 0

    def __len__(self) -> int:
        return len(self.steps)

    def transitions(self):
        from ..foresight import TransitionSample

        obs = [o for o, _ in self.steps] + [self.final_observation]
        return [TransitionSample(obs[i], a, obs[i + 1]) for i, (_, a) in enumerate(self.steps)]


def record_demo(spec: TaskSpec, seed: int, n_random: int = 2, max_oracle_steps: int | None = None) -> Episode:
    """Random perturbations followed by the scripted expert until success."""
    world, goal = load_task(spec, seed)
    keepout = [b.polygon() for b in goal.blocks]
    steps, worlds = [], []
    for i in range(n_random):
        a = sample_random_action(world, (seed, 7919, i), keepout)
        steps.append((render(world), a))
        worlds.append(world)
        world = apply_action(world, a)
    limit = 2 * spec.n_blocks if max_oracle_steps is None else max_oracle_steps
    for _ in range(limit):
        if check_success(world, goal):
            break
        a = oracle_policy(world, goal)
        steps.append((render(world), a))
        worlds.append(world)
        world = apply_action(world, a)
    if not check_success(world, goal):
        raise OracleError(f"oracle did not finish {spec.name} (seed {seed})")
    worlds.append(world)
    return Episode(spec.name, seed, tuple(steps), render(world), tuple(worlds), n_random)
