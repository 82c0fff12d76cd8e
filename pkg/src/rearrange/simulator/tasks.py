"""Task specifications, the shipped task gallery, and episode initialisation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..geometry import TAU, PoseSE2, WorkspaceCalib
from .world import BlockState, Footprint, WorldState, footprints_overlap, is_stable

TASK_SCHEMA_VERSION = 1
SPAWN_CLEARANCE = 0.01  # m between spawned blocks and any other footprint
MAX_SPAWN_ATTEMPTS = 10_000


class SpawnError(RuntimeError):
    """Rejection sampling could not find a collision-free pose."""


class TaskSpecError(ValueError):
    pass


@dataclass(frozen=True)
class BlockSpec:
    footprint: Footprint
    thickness: float
    color: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"footprint": self.footprint.to_dict(), "thickness": self.thickness, "color": list(self.color)}

    @classmethod
    def from_dict(cls, d: dict) -> BlockSpec:
        return cls(Footprint.from_dict(d["footprint"]), d["thickness"], tuple(float(c) for c in d["color"]))


@dataclass(frozen=True)
class TaskSpec:
    name: str
    blocks: tuple[BlockSpec, ...]
    goal_poses: tuple[tuple[PoseSE2, float], ...]
    spawn_region: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    seed: int = 0
    split: str = "train"
    calib: WorkspaceCalib = field(default_factory=WorkspaceCalib)

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "goal_poses", tuple((p, float(z)) for p, z in self.goal_poses))
        self.validate()

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def goal_world(self) -> WorldState:
        return WorldState(
            tuple(
                BlockState(i, b.footprint, b.thickness, b.color, pose, z)
                for i, (b, (pose, z)) in enumerate(zip(self.blocks, self.goal_poses))
            ),
            self.calib,
        )

    def validate(self) -> None:
        if len(self.blocks) != len(self.goal_poses):
            raise TaskSpecError(f"{self.name}: {len(self.blocks)} blocks but {len(self.goal_poses)} goal poses")
        xmin, ymin, xmax, ymax = self.spawn_region
        if not (xmin < xmax and ymin < ymax):
            raise TaskSpecError(f"{self.name}: empty spawn region")
        goal = self.goal_world()
        bl = goal.blocks
        for i in range(len(bl)):
            for j in range(i + 1, len(bl)):
                a, b = bl[i], bl[j]
                z_overlap = min(a.top, b.top) - max(a.z, b.z)
                if z_overlap > 1e-9 and footprints_overlap(a.polygon(), b.polygon()):
                    raise TaskSpecError(f"{self.name}: goal blocks {i} and {j} interpenetrate")
        if not is_stable(goal):
            raise TaskSpecError(f"{self.name}: goal configuration is unsupported")

    def to_dict(self) -> dict:
        return {
            "schema_version": TASK_SCHEMA_VERSION,
            "name": self.name,
            "split": self.split,
            "seed": self.seed,
            "calib": self.calib.to_dict(),
            "spawn_region": list(self.spawn_region),
            "blocks": [b.to_dict() for b in self.blocks],
            "goal_poses": [{"pose": p.to_dict(), "z": z} for p, z in self.goal_poses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> TaskSpec:
        if d.get("schema_version", TASK_SCHEMA_VERSION) != TASK_SCHEMA_VERSION:
            raise TaskSpecError(f"unsupported task schema version {d['schema_version']}")
        calib = WorkspaceCalib.from_dict(d["calib"]) if "calib" in d else WorkspaceCalib()
        return cls(
            d["name"],
            tuple(BlockSpec.from_dict(b) for b in d["blocks"]),
            tuple((PoseSE2.from_dict(g["pose"]), g["z"]) for g in d["goal_poses"]),
            tuple(d["spawn_region"]),
            d.get("seed", 0),
            d.get("split", "train"),
            calib,
        )

    @classmethod
    def from_json(cls, path: str | Path) -> TaskSpec:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


TRAIN_TASKS = ("tower", "row", "square", "t-shape", "pyramid", "palace")
UNSEEN_TASKS = (
    "plane-t",
    "plane-square",
    "stair-2",
    "stair-3",
    "twin-tower",
    "rectangle",
    "pallet",
    "building",
)
TASK_NAMES = TRAIN_TASKS + UNSEEN_TASKS

_task_cache: dict[str, TaskSpec] = {}


def get_task(name: str) -> TaskSpec:
    """Load a shipped task by name (case-insensitive, '_' and '-' equivalent)."""
    key = name.lower().replace("_", "-")
    if key not in TASK_NAMES:
        raise KeyError(f"unknown task {name!r}; known: {', '.join(TASK_NAMES)}")
    if key not in _task_cache:
        text = resources.files("rearrange").joinpath("data", "tasks", f"{key}.json").read_text()
        _task_cache[key] = TaskSpec.from_dict(json.loads(text))
    return _task_cache[key]


def all_tasks() -> list[TaskSpec]:
    return [get_task(n) for n in TASK_NAMES]


def _inside(poly, region) -> bool:
    xmin, ymin, xmax, ymax = poly.bounds
    rx0, ry0, rx1, ry1 = region
    return xmin >= rx0 and ymin >= ry0 and xmax <= rx1 and ymax <= ry1


def sample_free_pose(
    rng: np.random.Generator,
    footprint: Footprint,
    region,
    obstacles,
    clearance: float = SPAWN_CLEARANCE,
    max_attempts: int = MAX_SPAWN_ATTEMPTS,
) -> PoseSE2:
    """Uniform pose in `region` whose footprint keeps `clearance` from all obstacles."""
    xmin, ymin, xmax, ymax = region
    for _ in range(max_attempts):
        pose = PoseSE2(rng.uniform(xmin, xmax), rng.uniform(ymin, ymax), rng.uniform(0.0, TAU))
        poly = footprint.polygon(pose)
        if not _inside(poly, region):
            continue
        if any(footprints_overlap(poly, ob, clearance) for ob in obstacles):
            continue
        return pose
    raise SpawnError(f"no collision-free pose after {max_attempts} attempts")


def load_task(spec: TaskSpec, seed: int | None = None) -> tuple[WorldState, WorldState]:
    """Initial world (blocks scattered on the table) and goal world.

    Spawned footprints keep clear of each other and of every goal footprint,
    so the goal structure can always be built in place.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    goal = spec.goal_world()
    obstacles = [b.polygon() for b in goal.blocks]
    blocks = []
    for i, b in enumerate(spec.blocks):
        pose = sample_free_pose(rng, b.footprint, spec.spawn_region, obstacles)
        blocks.append(BlockState(i, b.footprint, b.thickness, b.color, pose, 0.0))
        obstacles.append(blocks[-1].polygon())
    return WorldState(tuple(blocks), spec.calib), goal
