"""Quasi-static block world: state, top-down rendering, pick-and-place."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from shapely import affinity
from shapely.geometry import Point, Polygon, box
from shapely.ops import unary_union

from ..geometry import PickPlaceAction, PoseSE2, WorkspaceCalib, se2_compose
from ..observation import Observation

TABLE_COLOR = (0.35, 0.35, 0.35)
COLORS = {
    "red": (0.85, 0.2, 0.15),
    "green": (0.2, 0.7, 0.3),
    "blue": (0.2, 0.35, 0.85),
    "yellow": (0.9, 0.8, 0.2),
}
OVERLAP_AREA_TOL = 1e-7  # m^2; touching footprints do not count as overlapping


@dataclass(frozen=True)
class Footprint:
    """Planar block outline. For circles size_x = size_y = diameter."""

    shape: str = "square"
    size_x: float = 0.04
    size_y: float = 0.04

    def __post_init__(self) -> None:
        if self.shape not in ("square", "rect", "circle"):
            raise ValueError(f"unknown footprint shape {self.shape!r}")
        if self.size_x <= 0 or self.size_y <= 0:
            raise ValueError("footprint dimensions must be positive")
        if self.shape in ("square", "circle") and self.size_x != self.size_y:
            raise ValueError(f"{self.shape} footprint needs equal sides")

    @property
    def symmetry_period(self) -> float | None:
        """Rotation period under which the outline maps onto itself (None: any)."""
        return {"square": math.pi / 2, "rect": math.pi, "circle": None}[self.shape]

    @property
    def bounding_radius(self) -> float:
        return 0.5 * math.hypot(self.size_x, self.size_y)

    def contains_local(self, lx, ly):
        if self.shape == "circle":
            r = 0.5 * self.size_x
            return lx * lx + ly * ly <= r * r
        return (np.abs(lx) <= 0.5 * self.size_x) & (np.abs(ly) <= 0.5 * self.size_y)

    def polygon(self, pose: PoseSE2) -> Polygon:
        return _polygon(self, pose.x, pose.y, pose.theta)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "size_x": self.size_x, "size_y": self.size_y}

    @classmethod
    def from_dict(cls, d: dict) -> Footprint:
        return cls(d.get("shape", "square"), d["size_x"], d.get("size_y", d["size_x"]))


@lru_cache(maxsize=4096)
def _polygon(fp: Footprint, x: float, y: float, theta: float) -> Polygon:
    if fp.shape == "circle":
        return Point(x, y).buffer(0.5 * fp.size_x, quad_segs=16)
    local = box(-0.5 * fp.size_x, -0.5 * fp.size_y, 0.5 * fp.size_x, 0.5 * fp.size_y)
    return affinity.translate(affinity.rotate(local, theta, origin=(0, 0), use_radians=True), x, y)


@dataclass(frozen=True)
class BlockState:
    id: int
    footprint: Footprint
    thickness: float
    color: tuple[float, float, float]
    pose: PoseSE2
    z: float = 0.0

    def __post_init__(self) -> None:
        if self.z < 0:
            raise ValueError("block z must be non-negative")
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))

    @property
    def top(self) -> float:
        return self.z + self.thickness

    @property
    def kind(self) -> tuple:
        """Identity used for goal matching: (footprint, thickness, color)."""
        return (self.footprint, round(self.thickness, 9), self.color)

    def polygon(self) -> Polygon:
        return self.footprint.polygon(self.pose)

    def covers(self, x, y):
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        dx, dy = x - self.pose.x, y - self.pose.y
        return self.footprint.contains_local(c * dx + s * dy, -s * dx + c * dy)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "footprint": self.footprint.to_dict(),
            "thickness": self.thickness,
            "color": list(self.color),
            "pose": self.pose.to_dict(),
            "z": self.z,
        }

    @classmethod
    def from_dict(cls, d: dict) -> BlockState:
        return cls(
            d["id"],
            Footprint.from_dict(d["footprint"]),
            d["thickness"],
            tuple(d["color"]),
            PoseSE2.from_dict(d["pose"]),
            d["z"],
        )


def footprints_overlap(a: Polygon, b: Polygon, clearance: float = 0.0) -> bool:
    if clearance > 0:
        return a.distance(b) < clearance
    return a.intersection(b).area > OVERLAP_AREA_TOL


@dataclass(frozen=True)
class WorldState:
    blocks: tuple[BlockState, ...]
    calib: WorkspaceCalib = field(default_factory=WorkspaceCalib)
    unstable: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def block(self, block_id: int) -> BlockState:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)

    def with_block(self, nb: BlockState) -> WorldState:
        return replace(self, blocks=tuple(nb if b.id == nb.id else b for b in self.blocks))

    def topmost_at(self, x: float, y: float) -> BlockState | None:
        """Block whose top face is highest over the point (suction target)."""
        best = None
        for b in self.blocks:
            if b.covers(x, y) and (best is None or b.top > best.top):
                best = b
        return best

    def is_clear(self, b: BlockState) -> bool:
        """No other block rests on or above `b`'s footprint."""
        poly = b.polygon()
        return not any(
            o.id != b.id and o.z >= b.top - 1e-9 and footprints_overlap(poly, o.polygon())
            for o in self.blocks
        )

    def to_dict(self) -> dict:
        return {
            "blocks": [b.to_dict() for b in self.blocks],
            "calib": self.calib.to_dict(),
            "unstable": self.unstable,
        }

    @classmethod
    def from_dict(cls, d: dict) -> WorldState:
        return cls(
            tuple(BlockState.from_dict(b) for b in d["blocks"]),
            WorkspaceCalib.from_dict(d["calib"]),
            d.get("unstable", False),
        )


def landing_height(world: WorldState, poly: Polygon, exclude: int | None = None) -> float:
    """Max top of blocks under `poly`; 0 over bare table."""
    z = 0.0
    for b in world.blocks:
        if b.id != exclude and footprints_overlap(poly, b.polygon()):
            z = max(z, b.top)
    return z


def is_supported(world: WorldState, b: BlockState) -> bool:
    """Centre of a raised block lies inside the hull of its contact patches."""
    if b.z <= 1e-9:
        return True
    poly = b.polygon()
    contacts = [
        poly.intersection(o.polygon())
        for o in world.blocks
        if o.id != b.id and abs(o.top - b.z) < 1e-6
    ]
    contacts = [c for c in contacts if c.area > OVERLAP_AREA_TOL]
    if not contacts:
        return False
    return unary_union(contacts).convex_hull.buffer(1e-9).contains(Point(b.pose.x, b.pose.y))


def is_stable(world: WorldState) -> bool:
    return all(is_supported(world, b) for b in world.blocks)


def apply_action(world: WorldState, a: PickPlaceAction) -> WorldState:
    """Execute one suction pick-and-place.

    The topmost block under the pick point is moved rigidly by
    place o pick^-1 (rotation about the grasp point, then translation)
    and dropped onto the highest surface under its new footprint.
    A pick over bare table leaves the world unchanged.
    """
    picked = world.topmost_at(a.pick.x, a.pick.y)
    if picked is None:
        return world
    new_pose = se2_compose(a.relative_motion(), picked.pose)
    poly = picked.footprint.polygon(new_pose)
    z = landing_height(world, poly, exclude=picked.id)
    moved = world.with_block(replace(picked, pose=new_pose, z=z))
    return replace(moved, unstable=not is_stable(moved))


@lru_cache(maxsize=8)
def _pixel_grid(calib: WorkspaceCalib):
    x, y = calib.pixel_centers()
    x.flags.writeable = False
    y.flags.writeable = False
    return x, y


def render(world: WorldState, table_color=TABLE_COLOR) -> Observation:
    """Orthographic top-down RGB + height raster, sampled at pixel centres."""
    calib = world.calib
    X, Y = _pixel_grid(calib)
    height = np.zeros(calib.shape)
    rgb = np.empty(calib.shape + (3,))
    rgb[:] = table_color
    pitch = calib.pixel_pitch
    for b in sorted(world.blocks, key=lambda b: (b.top, b.id)):
        r = b.footprint.bounding_radius
        fu, fv = calib.world_to_continuous(b.pose.x, b.pose.y)
        rp = r / pitch + 1
        u0, u1 = max(int(math.floor(fu - rp)), 0), min(int(math.ceil(fu + rp)) + 1, calib.H)
        v0, v1 = max(int(math.floor(fv - rp)), 0), min(int(math.ceil(fv + rp)) + 1, calib.W)
        if u0 >= u1 or v0 >= v1:
            continue
        m = b.covers(X[u0:u1, v0:v1], Y[u0:u1, v0:v1])
        height[u0:u1, v0:v1][m] = b.top
        rgb[u0:u1, v0:v1][m] = b.color
    return Observation(rgb, height)
