"""Goal-matching metrics: success and rate of progress."""

from __future__ import annotations

import math
from collections import defaultdict
from itertools import permutations

from ..geometry import angle_distance, angle_distance_mod
from .world import BlockState, WorldState

TRANSLATION_TOL = 0.01  # m, planar
Z_TOL = 0.005  # m
ROTATION_TOL = math.radians(15.0)


def rotation_error(block: BlockState, target: BlockState) -> float:
    """Rotation error folded by the footprint's symmetry (0 for circles)."""
    period = block.footprint.symmetry_period
    if period is None:
        return 0.0
    if math.isclose(period, 2 * math.pi):
        return angle_distance(block.pose.theta, target.pose.theta)
    return angle_distance_mod(block.pose.theta, target.pose.theta, period)


def block_in_place(block: BlockState, target: BlockState) -> bool:
    dxy = math.hypot(block.pose.x - target.pose.x, block.pose.y - target.pose.y)
    return (
        dxy < TRANSLATION_TOL
        and abs(block.z - target.z) < Z_TOL
        and rotation_error(block, target) < ROTATION_TOL
    )


def _groups(world: WorldState, goal: WorldState):
    wg, gg = defaultdict(list), defaultdict(list)
    for b in world.blocks:
        wg[b.kind].append(b)
    for b in goal.blocks:
        gg[b.kind].append(b)
    if set(wg) != set(gg) or any(len(wg[k]) != len(gg[k]) for k in wg):
        raise ValueError("world and goal hold different block multisets")
    return [(wg[k], gg[k]) for k in gg]


def best_assignment(world: WorldState, goal: WorldState) -> dict[int, int]:
    """Goal-slot id -> world block id for a largest set of in-place blocks.

    Exhaustive over permutations within each group of identical blocks;
    ties resolve to the first permutation in lexicographic order.
    """
    result: dict[int, int] = {}
    for blocks, slots in _groups(world, goal):
        ok = [[block_in_place(b, s) for s in slots] for b in blocks]
        n = len(slots)
        best, best_perm = -1, None
        for perm in permutations(range(n)):
            score = sum(ok[perm[j]][j] for j in range(n))
            if score > best:
                best, best_perm = score, perm
                if score == n:
                    break
        for j, i in enumerate(best_perm):
            if ok[i][j]:
                result[slots[j].id] = blocks[i].id
    return result


def rate_of_progress(world: WorldState, goal: WorldState) -> float:
    """Fraction of blocks within the per-block tolerances of some goal slot."""
    return len(best_assignment(world, goal)) / len(goal.blocks)


def check_success(world: WorldState, goal: WorldState) -> bool:
    if world.unstable:
        _groups(world, goal)
        return False
    return len(best_assignment(world, goal)) == len(goal.blocks)
