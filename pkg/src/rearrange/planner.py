"""Tree search over imagined observations and discounted-value action choice."""

from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .foresight import ForesightPredictor, OraclePredictor
from .geometry import N_ROTATIONS, PickPlaceAction, WorkspaceCalib
from .observation import UNIT_WEIGHTS, ChannelWeights, Observation, l1_distance
from .proposal import (
    EmptyProposalError,
    ProposalConfig,
    ProposalResult,
    Scorer,
    argmax_place,
    propose_from_maps,
    select_pick,
)
from .simulator.metrics import check_success, rate_of_progress
from .simulator.world import WorldState, apply_action, render


class PlanningError(RuntimeError):
    """No node with positive value, or nothing to search."""


@dataclass(frozen=True, eq=False)
class SearchNode:
    obs: Observation
    depth: int
    trajectory: tuple[PickPlaceAction, ...]
    parent: int = -1  # index into the node list, -1 for children of the root

    def __post_init__(self) -> None:
        if self.depth != len(self.trajectory):
            raise ValueError("depth must equal trajectory length")


@dataclass(frozen=True)
class PlannerConfig:
    """Search hyperparameters.

    `branching` optionally gives the number of place proposals per depth;
    by default every level uses `proposal.k`. A level with branching 1 is
    expanded single-modally (pick argmax, place argmax).
    """

    d_max: int = 1
    c: float = 1.0
    gamma: float = 0.99
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    weights: ChannelWeights = UNIT_WEIGHTS
    branching: tuple[int, ...] | None = None
    height_scale: float | None = None  # None: max goal height
    workers: int = 1

    def __post_init__(self) -> None:
        if self.d_max < 1:
            raise ValueError("d_max must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.branching is not None:
            object.__setattr__(self, "branching", tuple(int(b) for b in self.branching))
            if len(self.branching) != self.d_max or min(self.branching) < 1:
                raise ValueError("branching needs one positive entry per depth")

    def k_at(self, depth: int) -> int:
        """Branching factor when expanding a node at `depth` (0-based)."""
        return self.branching[depth] if self.branching else self.proposal.k

    @classmethod
    def tvf_small(cls, **kw) -> PlannerConfig:
        return cls.from_variant("K2-M1-G0", **kw)

    @classmethod
    def tvf_large(cls, **kw) -> PlannerConfig:
        return cls.from_variant("K3-M3-G0", **kw)

    @classmethod
    def greedy(cls, **kw) -> PlannerConfig:
        return cls(d_max=1, proposal=ProposalConfig(k=1), **kw)

    @classmethod
    def from_variant(cls, name: str, **kw) -> PlannerConfig:
        """Parse 'K3-M4-G1' (optionally prefixed 'tvf-'): K clusters, M multi-modal levels, G single-modal levels."""
        m = re.fullmatch(r"(?:tvf-)?k(\d+)-m(\d+)-g(\d+)", name.strip().lower())
        if m is None:
            raise ValueError(f"bad variant name {name!r}")
        k, mm, gg = (int(x) for x in m.groups())
        if mm + gg < 1:
            raise ValueError("variant needs at least one level")
        proposal = kw.pop("proposal", ProposalConfig())
        proposal = replace(proposal, k=k, top_n=max(proposal.top_n, k))
        return cls(d_max=mm + gg, proposal=proposal, branching=(k,) * mm + (1,) * gg, **kw)

    def to_dict(self) -> dict:
        return {
            "d_max": self.d_max,
            "c": self.c,
            "gamma": self.gamma,
            "alpha": self.proposal.alpha,
            "top_n": self.proposal.top_n,
            "k": self.proposal.k,
            "kmeans_iters": self.proposal.kmeans_iters,
            "branching": [self.k_at(d) for d in range(self.d_max)],
            "weights": [*self.weights.w_rgb, self.weights.w_height],
            "height_scale": self.height_scale,
        }


def goal_height_scale(o_g: Observation, cfg: PlannerConfig) -> float:
    if cfg.height_scale is not None:
        return cfg.height_scale
    return float(o_g.height.max()) or 1.0


def propose(o: Observation, o_g: Observation, scorer: Scorer, cfg: PlannerConfig, depth: int) -> ProposalResult:
    maps = scorer.score(o, o_g)
    k = cfg.k_at(depth)
    if k == cfg.proposal.k:
        return propose_from_maps(maps, cfg.proposal)
    return propose_from_maps(maps, replace(cfg.proposal, k=k, top_n=max(cfg.proposal.top_n, k)))


def _expand(node_obs, node_traj, depth, o_g, f, scorer, cfg, calib, n_rot):
    try:
        prop = propose(node_obs, o_g, scorer, cfg, depth)
    except EmptyProposalError:
        return None, []
    children = []
    for place in prop.places:
        a = PickPlaceAction.from_pixels(calib, prop.pick, place, n_rot)
        children.append((f.predict(node_obs, a), node_traj + (a,)))
    return prop, children


def tree_search(
    o_t: Observation,
    o_g: Observation,
    f: ForesightPredictor,
    scorer: Scorer,
    cfg: PlannerConfig,
    calib: WorkspaceCalib | None = None,
    n_rotations: int = N_ROTATIONS,
) -> list[SearchNode]:
    """Breadth-first full expansion to depth d_max.

    Returns every non-root node, ordered by depth, then parent, then
    proposal index. A node whose proposal is empty simply has no children.
    """
    calib = calib or WorkspaceCalib(H=o_t.shape[0], W=o_t.shape[1])
    nodes: list[SearchNode] = []
    frontier = [(-1, o_t, ())]
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for depth in range(cfg.d_max):
            jobs = [(obs, traj, depth, o_g, f, scorer, cfg, calib, n_rotations) for _, obs, traj in frontier]
            results = list(pool.map(lambda j: _expand(*j), jobs)) if pool else [_expand(*j) for j in jobs]
            next_frontier = []
            for (parent_idx, _, _), (_, children) in zip(frontier, results):
                for obs, traj in children:
                    nodes.append(SearchNode(obs, depth + 1, traj, parent_idx))
                    next_frontier.append((len(nodes) - 1, obs, traj))
            frontier = next_frontier
            if not frontier:
                break
    finally:
        if pool:
            pool.shutdown()
    return nodes


def node_value(n: SearchNode, o_g: Observation, cfg: PlannerConfig, height_scale: float | None = None) -> float:
    """gamma^(d-1) * (C - L1(obs, goal))."""
    if n.depth < 1:
        raise ValueError("the root node is never valued")
    hs = goal_height_scale(o_g, cfg) if height_scale is None else height_scale
    return cfg.gamma ** (n.depth - 1) * (cfg.c - l1_distance(n.obs, o_g, cfg.weights, hs))


def node_values(nodes, o_g, cfg) -> list[float]:
    hs = goal_height_scale(o_g, cfg)
    return [node_value(n, o_g, cfg, hs) for n in nodes]


def tvf_select(nodes, o_g: Observation, cfg: PlannerConfig, values=None) -> tuple[PickPlaceAction, int]:
    """First action of the highest-value node, and that node's index.

    Scans in node order with a strict '>' from 0, so ties go to the
    shallower, earlier node. All values <= 0 is a planning failure.
    """
    if not nodes:
        raise PlanningError("empty node list")
    if values is None:
        values = node_values(nodes, o_g, cfg)
    v_max, best = 0.0, -1
    for i, v in enumerate(values):
        if v > v_max:
            v_max, best = v, i
    if best < 0:
        raise PlanningError("no node has positive value")
    return nodes[best].trajectory[0], best


def greedy_action(o: Observation, o_g: Observation, scorer: Scorer, calib: WorkspaceCalib, n_rotations: int = N_ROTATIONS) -> PickPlaceAction:
    """Single-modal policy: pick argmax, place argmax."""
    maps = scorer.score(o, o_g)
    if float(maps.q_place.max()) <= 0.0:
        raise EmptyProposalError("place map is identically zero")
    return PickPlaceAction.from_pixels(calib, select_pick(maps), argmax_place(maps), n_rotations)


@dataclass
class RolloutResult:
    success: bool
    progress: float
    steps: list[dict]
    final_world: WorldState
    failure: str | None = None
    step_times: list[float] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def rollout_loop(world: WorldState, goal: WorldState, plan, max_steps: int | None = None) -> RolloutResult:
    """Generic act-replan loop.

    `plan(world, o_t, o_g)` returns (action, trace dict); it may raise
    PlanningError or EmptyProposalError, which ends the rollout as a failure.
    """
    max_steps = len(goal.blocks) if max_steps is None else max_steps
    o_g = render(goal)
    steps: list[dict] = []
    times: list[float] = []
    failure = None
    for t in range(max_steps):
        if check_success(world, goal):
            break
        t0 = time.perf_counter()
        try:
            action, trace = plan(world, render(world), o_g)
        except (PlanningError, EmptyProposalError) as e:
            times.append(time.perf_counter() - t0)
            failure = f"step {t}: {e}"
            break
        times.append(time.perf_counter() - t0)
        before = world
        world = apply_action(world, action)
        steps.append(
            {"step": t, "action": action.to_dict(), **trace, "progress": rate_of_progress(world, goal), "world": before.to_dict()}
        )
    return RolloutResult(check_success(world, goal), rate_of_progress(world, goal), steps, world, failure, times)


def run_policy(
    world: WorldState,
    goal: WorldState,
    f,
    scorer: Scorer,
    cfg: PlannerConfig,
    max_steps: int | None = None,
    n_rotations: int = N_ROTATIONS,
) -> RolloutResult:
    """Plan with tree search, act, replan until success or the step budget runs out.

    An `OraclePredictor` is re-anchored to the true world before every
    plan; any other predictor is used as is.
    """

    def plan(w, o_t, o_g):
        if isinstance(f, OraclePredictor):
            f.reset(w)
        nodes = tree_search(o_t, o_g, f, scorer, cfg, w.calib, n_rotations)
        values = node_values(nodes, o_g, cfg)
        action, best = tvf_select(nodes, o_g, cfg, values)
        return action, {
            "n_nodes": len(nodes),
            "node_values": values,
            "node_depths": [n.depth for n in nodes],
            "chosen_node": best,
        }

    return rollout_loop(world, goal, plan, max_steps)


def run_greedy_policy(
    world: WorldState, goal: WorldState, scorer: Scorer, max_steps: int | None = None, n_rotations: int = N_ROTATIONS
) -> RolloutResult:
    """Single-modal baseline: no foresight, act on the argmax pick and place."""

    def plan(w, o_t, o_g):
        return greedy_action(o_t, o_g, scorer, w.calib, n_rotations), {}

    return rollout_loop(world, goal, plan, max_steps)
