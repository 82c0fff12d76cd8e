"""Planar rigid poses and the pixel <-> workspace mapping.

World frame: x runs along raster rows (u), y along raster columns (v).
Because that mapping is a pure scale plus offset (no axis flip), an angle
in the world frame is the same angle in continuous pixel coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi

N_ROTATIONS = 36
WORKSPACE_EXTENT = 0.5  # meters, square tabletop
RASTER_SIZE = 160


class BoundsError(IndexError):
    """A pixel lies outside the raster."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    t = math.fmod(theta, TAU)
    if t < 0.0:
        t += TAU
    # fmod of a tiny negative number can land exactly on TAU after the shift
    if t >= TAU:
        t = 0.0
    return t


def angle_distance(a: float, b: float) -> float:
    """Minimal absolute difference between two angles on the circle."""
    d = math.fmod(abs(a - b), TAU)
    return min(d, TAU - d)


def angle_distance_mod(a: float, b: float, period: float) -> float:
    """Minimal angular difference when angles are equivalent modulo `period`."""
    d = math.fmod(abs(a - b), period)
    return min(d, period - d)


def bin_to_angle(rot_bin: int, n_rotations: int = N_ROTATIONS) -> float:
    return TAU * rot_bin / n_rotations


def angle_to_bin(theta: float, n_rotations: int = N_ROTATIONS) -> int:
    return int(round(normalize_angle(theta) / (TAU / n_rotations))) % n_rotations


@dataclass(frozen=True)
class PoseSE2:
    """Planar rigid pose (x, y in meters, theta in radians, kept in [0, 2*pi))."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> PoseSE2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> PoseSE2:
        return cls(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]))

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation()
        m[0, 2], m[1, 2] = self.x, self.y
        return m

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> PoseSE2:
        return cls(d["x"], d["y"], d.get("theta", 0.0))


def se2_compose(g1: PoseSE2, g2: PoseSE2) -> PoseSE2:
    """g1 o g2 = (R1 R2, R1 q2 + q1)."""
    c, s = math.cos(g1.theta), math.sin(g1.theta)
    return PoseSE2(
        c * g2.x - s * g2.y + g1.x,
        s * g2.x + c * g2.y + g1.y,
        g1.theta + g2.theta,
    )


def se2_inverse(g: PoseSE2) -> PoseSE2:
    c, s = math.cos(g.theta), math.sin(g.theta)
    return PoseSE2(-(c * g.x + s * g.y), s * g.x - c * g.y, -g.theta)


def se2_apply_point(g: PoseSE2, p) -> tuple[float, float]:
    """R(theta) p + q."""
    c, s = math.cos(g.theta), math.sin(g.theta)
    px, py = p
    return (c * px - s * py + g.x, s * px + c * py + g.y)


def se2_inverse_apply_point(g: PoseSE2, p) -> tuple[float, float]:
    """R(theta)^-1 p - R(theta)^-1 q."""
    c, s = math.cos(g.theta), math.sin(g.theta)
    dx, dy = p[0] - g.x, p[1] - g.y
    return (c * dx + s * dy, -s * dx + c * dy)


def rotation_about(point, theta: float) -> PoseSE2:
    """Pure rotation by theta about a fixed world point."""
    c, s = math.cos(theta), math.sin(theta)
    px, py = point
    return PoseSE2(px - (c * px - s * py), py - (s * px + c * py), theta)


@dataclass(frozen=True)
class PixelPose:
    """Discrete pose: raster row u, column v, rotation bin."""

    u: int
    v: int
    rot_bin: int = 0

    def angle(self, n_rotations: int = N_ROTATIONS) -> float:
        return bin_to_angle(self.rot_bin, n_rotations)

    def to_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "rot_bin": self.rot_bin}


@dataclass(frozen=True)
class WorkspaceCalib:
    """Maps raster pixels to tabletop coordinates.

    Pixel (u, v) covers the square whose center is
    origin + ((u + 0.5) * pitch, (v + 0.5) * pitch).
    """

    origin: tuple[float, float] = (0.0, 0.0)
    pixel_pitch: float = WORKSPACE_EXTENT / RASTER_SIZE
    H: int = RASTER_SIZE
    W: int = RASTER_SIZE

    def __post_init__(self) -> None:
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be positive")
        if self.H < 1 or self.W < 1:
            raise ValueError("raster must be at least 1x1")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.H, self.W)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.H * self.pixel_pitch, self.W * self.pixel_pitch)

    @property
    def center(self) -> tuple[float, float]:
        return (
            self.origin[0] + 0.5 * self.H * self.pixel_pitch,
            self.origin[1] + 0.5 * self.W * self.pixel_pitch,
        )

    def in_bounds(self, u: int, v: int) -> bool:
        return 0 <= u < self.H and 0 <= v < self.W

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World (x, y) of every pixel center, each shaped (H, W)."""
        xs = self.origin[0] + (np.arange(self.H) + 0.5) * self.pixel_pitch
        ys = self.origin[1] + (np.arange(self.W) + 0.5) * self.pixel_pitch
        return np.meshgrid(xs, ys, indexing="ij")

    def world_to_continuous(self, x: float, y: float) -> tuple[float, float]:
        """Continuous pixel coordinates; integer values sit on pixel centers."""
        return (
            (x - self.origin[0]) / self.pixel_pitch - 0.5,
            (y - self.origin[1]) / self.pixel_pitch - 0.5,
        )

    def continuous_to_world(self, fu: float, fv: float) -> tuple[float, float]:
        return (
            self.origin[0] + (fu + 0.5) * self.pixel_pitch,
            self.origin[1] + (fv + 0.5) * self.pixel_pitch,
        )

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "pixel_pitch": self.pixel_pitch,
            "H": self.H,
            "W": self.W,
        }

    @classmethod
    def from_dict(cls, d: dict) -> WorkspaceCalib:
        return cls(tuple(d["origin"]), d["pixel_pitch"], d["H"], d["W"])


def _nearest_index(f: float) -> int:
    # nearest integer, ties toward the lower index
    return int(math.ceil(f - 0.5))


def pixel_to_world(
    calib: WorkspaceCalib, p: PixelPose, n_rotations: int = N_ROTATIONS
) -> PoseSE2:
    if not calib.in_bounds(p.u, p.v):
        raise BoundsError(f"pixel ({p.u}, {p.v}) outside {calib.H}x{calib.W} raster")
    x, y = calib.continuous_to_world(p.u, p.v)
    return PoseSE2(x, y, bin_to_angle(p.rot_bin, n_rotations))


def world_to_pixel(
    calib: WorkspaceCalib, pose: PoseSE2, n_rotations: int = N_ROTATIONS
) -> PixelPose:
    fu, fv = calib.world_to_continuous(pose.x, pose.y)
    u, v = _nearest_index(fu), _nearest_index(fv)
    if not calib.in_bounds(u, v):
        raise BoundsError(f"pose ({pose.x:.4f}, {pose.y:.4f}) maps outside the raster")
    return PixelPose(u, v, angle_to_bin(pose.theta, n_rotations))


def pose_to_pixel_transform(calib: WorkspaceCalib, g: PoseSE2) -> tuple[np.ndarray, np.ndarray]:
    """Express a world rigid motion as c -> R c + t on continuous pixel coordinates."""
    rot = g.rotation()
    o = np.asarray(calib.origin) / calib.pixel_pitch + 0.5
    t = rot @ o + g.translation / calib.pixel_pitch - o
    return rot, t


@dataclass(frozen=True)
class PickPlaceAction:
    """Paired pick and place poses.

    Planner and oracle actions keep pick.theta = 0 (symmetric suction
    gripper); augmented actions may carry a nonzero pick angle, so the
    block motion is always the relative transform place o pick^-1.
    """

    pick: PoseSE2
    place: PoseSE2

    @property
    def delta_theta(self) -> float:
        return normalize_angle(self.place.theta - self.pick.theta)

    def relative_motion(self) -> PoseSE2:
        return se2_compose(self.place, se2_inverse(self.pick))

    def transformed(self, g: PoseSE2) -> PickPlaceAction:
        return PickPlaceAction(se2_compose(g, self.pick), se2_compose(g, self.place))

    @classmethod
    def from_pixels(
        cls,
        calib: WorkspaceCalib,
        pick: PixelPose,
        place: PixelPose,
        n_rotations: int = N_ROTATIONS,
    ) -> PickPlaceAction:
        pk = pixel_to_world(calib, PixelPose(pick.u, pick.v, 0), n_rotations)
        return cls(pk, pixel_to_world(calib, place, n_rotations))

    def to_dict(self) -> dict:
        return {"pick": self.pick.to_dict(), "place": self.place.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> PickPlaceAction:
        return cls(PoseSE2.from_dict(d["pick"]), PoseSE2.from_dict(d["place"]))
