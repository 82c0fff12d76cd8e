"""Top-down RGB + height rasters and the image-space operations on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import PixelPose, PoseSE2, WorkspaceCalib, pose_to_pixel_transform

DEFAULT_MASK_SIDE = 65
# sample coordinates are quantised to this binary grid (pixels) so motions
# that differ only by round-off resample bit-identically
_GRID = 2.0 ** 20


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Observation:
    """H x W x 4 observation: RGB in [0, 1] plus column height in meters."""

    rgb: np.ndarray
    height: np.ndarray

    def __post_init__(self) -> None:
        rgb, height = _frozen(self.rgb), _frozen(self.height)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or height.shape != rgb.shape[:2]:
            raise ValueError(f"bad observation shapes rgb={rgb.shape} height={height.shape}")
        if not (np.isfinite(rgb).all() and np.isfinite(height).all()):
            raise ValueError("observation contains non-finite values")
        if (height < 0).any():
            raise ValueError("height must be non-negative")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "height", height)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height.shape

    @classmethod
    def zeros(cls, H: int, W: int) -> Observation:
        return cls(np.zeros((H, W, 3)), np.zeros((H, W)))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> Observation:
        return cls(arr[..., :3], np.maximum(arr[..., 3], 0.0))

    def stack(self, height_scale: float = 1.0) -> np.ndarray:
        """(H, W, 4) array; the height channel is divided by `height_scale`."""
        return np.concatenate([self.rgb, self.height[..., None] / height_scale], axis=-1)

    def equals(self, other: Observation) -> bool:
        return np.array_equal(self.rgb, other.rgb) and np.array_equal(self.height, other.height)

    def key(self) -> bytes:
        return self.rgb.tobytes() + self.height.tobytes()


@dataclass(frozen=True)
class ChannelWeights:
    w_rgb: tuple[float, float, float] = (1.0, 1.0, 1.0)
    w_height: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w_rgb) <= 0 or self.w_height <= 0:
            raise ValueError("channel weights must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([*self.w_rgb, self.w_height], dtype=np.float64)


UNIT_WEIGHTS = ChannelWeights()
# height channel weighted 5x for demo-evaluation loss
TRAINING_WEIGHTS = ChannelWeights((1.0, 1.0, 1.0), 5.0)


def l1_distance(
    a: Observation,
    b: Observation,
    w: ChannelWeights = UNIT_WEIGHTS,
    height_scale: float = 1.0,
    mask: np.ndarray | None = None,
) -> float:
    """Weighted mean absolute error over pixels and channels.

    Each channel's mean |a - b| is combined as sum_c w_c * mean_c / sum_c w_c.
    `mask` restricts the mean to selected pixels.
    """
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    diff = np.abs(a.stack(height_scale) - b.stack(height_scale))
    if mask is not None:
        if not mask.any():
            return 0.0
        diff = diff[mask]
    per_channel = diff.reshape(-1, 4).mean(axis=0)
    wa = w.as_array()
    return float((per_channel * wa).sum() / wa.sum())


def channel_l1(a: Observation, b: Observation, height_scale: float = 1.0) -> tuple[float, float]:
    """(color L1, height L1), the two columns of a foresight accuracy table."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    color = float(np.abs(a.rgb - b.rgb).mean())
    height = float(np.abs(a.height - b.height).mean() / height_scale)
    return color, height


# --- resampling -----------------------------------------------------------


def _snap(f: np.ndarray) -> np.ndarray:
    return np.round(f * _GRID) / _GRID


def bilinear_sample(
    arr: np.ndarray, fu: np.ndarray, fv: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Sample `arr` (H, W, C) at continuous coords; zero outside the raster.

    Returns (samples, valid) where valid marks coordinates inside the
    source raster. Coordinates are rounded to a 2^-20 pixel grid, so
    integer shifts and quarter turns resample exactly, and so do motions
    that agree up to floating-point round-off.
    """
    H, W = arr.shape[:2]
    fu, fv = _snap(fu), _snap(fv)
    u0, v0 = np.floor(fu).astype(np.int64), np.floor(fv).astype(np.int64)
    au, av = fu - u0, fv - v0
    out = np.zeros(fu.shape + arr.shape[2:])
    for du, wu in ((0, 1.0 - au), (1, au)):
        for dv, wv in ((0, 1.0 - av), (1, av)):
            uu, vv = u0 + du, v0 + dv
            wgt = wu * wv
            inb = (uu >= 0) & (uu < H) & (vv >= 0) & (vv < W) & (wgt > 0)
            vals = arr[np.clip(uu, 0, H - 1), np.clip(vv, 0, W - 1)]
            wgt = np.where(inb, wgt, 0.0)
            out += vals * (wgt[..., None] if arr.ndim == 3 else wgt)
    valid = (fu >= 0) & (fu <= H - 1) & (fv >= 0) & (fv <= W - 1)
    return out, valid


def warp_pixels(
    arr: np.ndarray, rot: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """out(c) = arr(h^-1 c) for the pixel-space motion h(c) = rot c + t."""
    H, W = arr.shape[:2]
    uu, vv = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    du, dv = uu - t[0], vv - t[1]
    # rot^-1 = rot^T
    fu = rot[0, 0] * du + rot[1, 0] * dv
    fv = rot[0, 1] * du + rot[1, 1] * dv
    return bilinear_sample(arr, fu, fv)


def warp_observation(
    o: Observation, g: PoseSE2, calib: WorkspaceCalib, return_valid: bool = False
):
    """(g . o)(p) = o(g^-1 p), bilinear, zero fill outside the source."""
    rot, t = pose_to_pixel_transform(calib, g)
    out, valid = warp_pixels(o.stack(), rot, t)
    res = Observation.from_array(out)
    return (res, valid) if return_valid else res


def rotate_about_pivot(o: Observation, pivot: tuple[int, int], angle: float) -> Observation:
    """Rigid rotation of the raster by `angle` about pixel `pivot`, zero fill."""
    H, W = o.shape
    if not (0 <= pivot[0] < H and 0 <= pivot[1] < W):
        raise IndexError(f"pivot {pivot} outside raster")
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    p = np.asarray(pivot, dtype=np.float64)
    out, _ = warp_pixels(o.stack(), rot, p - rot @ p)
    return Observation.from_array(out)


# --- crop / paste / masks -------------------------------------------------


def _square_bounds(center: tuple[int, int], side: int, H: int, W: int):
    r = side // 2
    u, v = center
    return max(u - r, 0), min(u + r + 1, H), max(v - r, 0), min(v + r + 1, W)


def square_mask(center: tuple[int, int], side: int, H: int, W: int) -> np.ndarray:
    m = np.zeros((H, W), dtype=bool)
    u0, u1, v0, v1 = _square_bounds(center, side, H, W)
    m[u0:u1, v0:v1] = True
    return m


def _check_side(side: int) -> None:
    if side < 1 or side % 2 == 0:
        raise ValueError(f"square side must be a positive odd integer, got {side}")


def crop_square(o: Observation | np.ndarray, center: tuple[int, int], side: int) -> np.ndarray:
    """side x side x C patch centred on `center`; out-of-raster area is zero."""
    _check_side(side)
    arr = o.stack() if isinstance(o, Observation) else o
    H, W = arr.shape[:2]
    r = side // 2
    patch = np.zeros((side, side) + arr.shape[2:])
    u0, u1, v0, v1 = _square_bounds(center, side, H, W)
    pu, pv = u0 - (center[0] - r), v0 - (center[1] - r)
    patch[pu : pu + (u1 - u0), pv : pv + (v1 - v0)] = arr[u0:u1, v0:v1]
    return patch


def paste_square(patch: np.ndarray, center: tuple[int, int], H: int, W: int) -> np.ndarray:
    """Paste a side x side x C patch onto a zero H x W x C raster at `center`."""
    side = patch.shape[0]
    _check_side(side)
    r = side // 2
    out = np.zeros((H, W) + patch.shape[2:])
    u0, u1, v0, v1 = _square_bounds(center, side, H, W)
    pu, pv = u0 - (center[0] - r), v0 - (center[1] - r)
    out[u0:u1, v0:v1] = patch[pu : pu + (u1 - u0), pv : pv + (v1 - v0)]
    return out


@dataclass(frozen=True, eq=False)
class PickMask:
    mask: np.ndarray
    center: PixelPose
    side: int


def build_pick_mask(p_pick: PixelPose, side: int, H: int, W: int) -> PickMask:
    _check_side(side)
    m = square_mask((p_pick.u, p_pick.v), side, H, W).astype(np.float64)
    m.flags.writeable = False
    return PickMask(m, p_pick, side)


@dataclass(frozen=True, eq=False)
class PlacePatch:
    patch: np.ndarray  # H x W x 4
    place_center: PixelPose
    delta_theta: float


def build_place_patch(
    o: Observation,
    p_pick: PixelPose,
    p_place: PixelPose,
    delta_theta: float,
    side: int = DEFAULT_MASK_SIDE,
) -> PlacePatch:
    """Rotate o by delta_theta about p_pick, crop at p_pick, paste on zeros at p_place."""
    H, W = o.shape
    for p in (p_pick, p_place):
        if not (0 <= p.u < H and 0 <= p.v < W):
            raise IndexError(f"pixel ({p.u}, {p.v}) outside raster")
    rotated = rotate_about_pivot(o, (p_pick.u, p_pick.v), delta_theta)
    crop = crop_square(rotated, (p_pick.u, p_pick.v), side)
    patch = paste_square(crop, (p_place.u, p_place.v), H, W)
    patch.flags.writeable = False
    return PlacePatch(patch, p_place, delta_theta)


# --- object cut -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObjectCut:
    """Above-support region under a pick point."""

    region: np.ndarray  # bool H x W
    support: float  # meters
    pick_pixel: tuple[int, int]
    rgb: np.ndarray = field(repr=False)  # object colors on region, zeros elsewhere
    relative_height: np.ndarray = field(repr=False)  # height above support on region

    @property
    def empty(self) -> bool:
        return not self.region.any()


def cut_object(
    o: Observation,
    pick_pixel: tuple[int, int],
    side: int = DEFAULT_MASK_SIDE,
    eps_h: float = 0.002,
    thickness_prior: float | None = 0.03,
) -> ObjectCut:
    """Extract the object under `pick_pixel` inside the side x side square.

    The support height is the median of the square's boundary heights,
    raised to (height at pick - thickness_prior) when a prior is given so
    the top block of a stack is cut alone. The object is the 4-connected
    component of above-support pixels containing the pick pixel.
    """
    H, W = o.shape
    u, v = pick_pixel
    u0, u1, v0, v1 = _square_bounds(pick_pixel, side, H, W)
    sq = o.height[u0:u1, v0:v1]
    ring = np.concatenate([sq[0, :], sq[-1, :], sq[1:-1, 0], sq[1:-1, -1]])
    support = float(np.median(ring))
    h_pick = float(o.height[u, v])
    if thickness_prior is not None:
        support = max(support, h_pick - thickness_prior)
    region = np.zeros((H, W), dtype=bool)
    rgb = np.zeros((H, W, 3))
    rel = np.zeros((H, W))
    if h_pick > support + eps_h:
        above = sq > support + eps_h
        labels, _ = ndimage.label(above)
        comp = labels == labels[u - u0, v - v0]
        region[u0:u1, v0:v1] = comp
        rgb[region] = o.rgb[region]
        rel[region] = o.height[region] - support
    return ObjectCut(region, support, (u, v), rgb, rel)


# --- image export ---------------------------------------------------------


def quantize(o: Observation) -> Observation:
    """Round to the export precision: 8-bit RGB, millimetre heights."""
    rgb = np.round(np.clip(o.rgb, 0.0, 1.0) * 255.0) / 255.0
    height = np.round(np.clip(o.height * 1000.0, 0, 65535)) / 1000.0
    return Observation(rgb, height)


def save_observation(o: Observation, rgb_path: str | Path, height_path: str | Path) -> None:
    """RGB as 8-bit PNG, height as 16-bit grayscale PNG in millimetres."""
    from PIL import Image

    rgb8 = np.round(np.clip(o.rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    h16 = np.round(np.clip(o.height * 1000.0, 0, 65535)).astype(np.uint16)
    Image.fromarray(rgb8, mode="RGB").save(rgb_path)
    Image.fromarray(h16).save(height_path)


def load_observation(rgb_path: str | Path, height_path: str | Path) -> Observation:
    from PIL import Image

    with Image.open(rgb_path) as im:
        rgb8 = np.asarray(im.convert("RGB"), dtype=np.float64)
    with Image.open(height_path) as im:
        h16 = np.asarray(im, dtype=np.float64)
    return Observation(rgb8 / 255.0, h16 / 1000.0)
