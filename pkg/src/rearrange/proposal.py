"""Action-value maps and multi-modal place proposals.

A scorer turns (current, goal) observations into a pick map (H x W) and a
place map (H x W x R). `multimodal_propose` thresholds the rotation-maxed
place map, keeps the top N pixels, clusters them with K-means, and returns
the best pixel of each cluster together with its best rotation bin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import fft, ndimage

from .geometry import N_ROTATIONS, PixelPose
from .observation import DEFAULT_MASK_SIDE, Observation, crop_square, cut_object, warp_pixels


class EmptyProposalError(RuntimeError):
    """The place map has no positive value to propose from."""


@dataclass(frozen=True, eq=False)
class ActionValueMaps:
    q_pick: np.ndarray  # (H, W)
    q_place: np.ndarray  # (H, W, R)

    def __post_init__(self) -> None:
        if self.q_place.ndim != 3 or self.q_place.shape[:2] != self.q_pick.shape:
            raise ValueError(f"q_pick {self.q_pick.shape} and q_place {self.q_place.shape} disagree")
        if not (np.isfinite(self.q_pick).all() and np.isfinite(self.q_place).all()):
            raise ValueError("action values must be finite")
        if (self.q_pick < 0).any() or (self.q_place < 0).any():
            raise ValueError("action values must be non-negative")

    @property
    def n_rotations(self) -> int:
        return self.q_place.shape[2]


class Scorer(Protocol):
    def score(self, o: Observation, o_g: Observation) -> ActionValueMaps: ...


@dataclass(frozen=True)
class ProposalConfig:
    alpha: float = 0.01
    top_n: int = 100
    k: int = 3
    kmeans_iters: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.top_n >= self.k >= 1:
            raise ValueError("need top_n >= k >= 1")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be positive")


@dataclass(frozen=True)
class ProposalResult:
    pick: PixelPose
    places: tuple[PixelPose, ...]
    values: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "pick": self.pick.to_dict(),
            "places": [p.to_dict() for p in self.places],
            "values": list(self.values),
        }


def select_pick(maps: ActionValueMaps) -> PixelPose:
    """Global argmax of q_pick, first in row-major order on ties; bin 0."""
    u, v = np.unravel_index(int(np.argmax(maps.q_pick)), maps.q_pick.shape)
    return PixelPose(int(u), int(v), 0)


def argmax_place(maps: ActionValueMaps) -> PixelPose:
    """Single best (u, v, r) of q_place; row-major then lowest bin on ties."""
    u, v, r = np.unravel_index(int(np.argmax(maps.q_place)), maps.q_place.shape)
    return PixelPose(int(u), int(v), int(r))


# --- K-means ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray  # (n,) cluster index per point
    centers: np.ndarray  # (k, 2)
    sse_history: tuple[float, ...]  # within-cluster SSE after each Lloyd step

    @property
    def k(self) -> int:
        return len(self.centers)


def _sse(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    return float(((points - centers[labels]) ** 2).sum())


def kmeans(points, k: int, iters: int = 20, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm with deterministic farthest-point seeding.

    Seeding starts at points[0] (callers pass points best-first) and then
    repeatedly adds the point farthest from all chosen seeds, lowest index
    on ties. `seed` is accepted for interface stability; no RNG is drawn.
    With k >= len(points) every point becomes its own cluster.
    """
    del seed
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("kmeans needs at least one point")
    if k >= n:
        return KMeansResult(np.arange(n), pts.copy(), (0.0,))

    chosen = [0]
    dmin = ((pts - pts[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, ((pts - pts[nxt]) ** 2).sum(axis=1))
    centers = pts[chosen].copy()

    labels = None
    history = []
    for _ in range(iters):
        d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d, axis=1)
        # re-seed empty clusters with the point worst served by its centre
        for j in range(k):
            if not (new_labels == j).any():
                cost = d[np.arange(n), new_labels]
                far = int(np.argmax(cost))
                new_labels[far] = j
        for j in range(k):
            centers[j] = pts[new_labels == j].mean(axis=0)
        history.append(_sse(pts, new_labels, centers))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    return KMeansResult(new_labels, centers, tuple(history))


# --- proposal ---------------------------------------------------------------


def propose_from_maps(maps: ActionValueMaps, cfg: ProposalConfig) -> ProposalResult:
    q = maps.q_place
    q_max = float(q.max())
    if q_max <= 0.0:
        raise EmptyProposalError("place map is identically zero")
    q_rot = q.max(axis=2)
    theta_idx = q.argmax(axis=2)  # lowest bin on ties
    flat = q_rot.ravel()
    # stable sort keeps row-major order among equal values
    order = np.argsort(-flat, kind="stable")
    n_keep = int((flat > cfg.alpha * q_max).sum())
    sel = order[: min(n_keep, cfg.top_n)]
    W = q_rot.shape[1]
    coords = np.stack([sel // W, sel % W], axis=1)

    km = kmeans(coords, cfg.k, cfg.kmeans_iters, cfg.seed)
    best = []
    for j in range(km.k):
        members = np.flatnonzero(km.labels == j)
        i = int(members[0])  # sel is best-first, so the first member wins
        best.append(i)
    best.sort()  # value descending, then row-major
    places, values = [], []
    for i in best:
        u, v = int(coords[i, 0]), int(coords[i, 1])
        places.append(PixelPose(u, v, int(theta_idx[u, v])))
        values.append(float(q_rot[u, v]))
    return ProposalResult(select_pick(maps), tuple(places), tuple(values))


def multimodal_propose(
    o: Observation, o_g: Observation, scorer: Scorer, cfg: ProposalConfig
) -> ProposalResult:
    return propose_from_maps(scorer.score(o, o_g), cfg)


# --- heuristic scorer ---------------------------------------------------------


def _window_sums(x: np.ndarray, side: int) -> np.ndarray:
    """Sum of x over the side x side window centred at each pixel (zero padded)."""
    c = np.cumsum(np.cumsum(np.pad(x, ((side // 2 + 1, side // 2), (side // 2 + 1, side // 2))), 0), 1)
    H, W = x.shape
    return c[side:side + H, side:side + W] - c[:H, side:side + W] - c[side:side + H, :W] + c[:H, :W]


def zncc_maps(target: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Zero-mean normalised cross-correlation of odd square templates.

    target: (H, W, C); templates: (R, s, s, C). Returns (H, W, R) where entry
    (u, v, r) scores template r centred on pixel (u, v); the target is zero
    padded outside the raster; each channel is centred on its own mean and
    the channels are then pooled into one vector.
    """
    H, W, C = target.shape
    R, s = templates.shape[0], templates.shape[1]
    n = s * s
    shape = (fft.next_fast_len(H + s - 1), fft.next_fast_len(W + s - 1))

    tz = templates - templates.mean(axis=(1, 2), keepdims=True)
    t_norm = np.sqrt((tz ** 2).sum(axis=(1, 2, 3)))

    xf = fft.rfft2(np.moveaxis(target, -1, 0), s=shape)  # (C, ., .)
    # correlation = convolution with the flipped template
    tf = fft.rfft2(np.moveaxis(tz[:, ::-1, ::-1, :], -1, 1), s=shape)  # (R, C, ., .)
    full = fft.irfft2((tf * xf[None]).sum(axis=1), s=shape)  # (R, ., .)
    r = s // 2
    num = full[:, r : r + H, r : r + W]

    var = np.zeros((H, W))
    for ch in range(C):
        x = target[..., ch]
        sx = _window_sums(x, s)
        var += _window_sums(x * x, s) - sx * sx / n
    x_norm = np.sqrt(np.maximum(var, 0.0))

    den = t_norm[:, None, None] * x_norm[None]
    out = np.zeros_like(num)
    ok = den > 1e-12
    out[ok] = num[ok] / den[ok]
    return np.moveaxis(out, 0, -1)


def rotated_templates(patch: np.ndarray, n_rotations: int) -> np.ndarray:
    """Rotate an (s, s, C) patch about its centre pixel by every bin angle."""
    s = patch.shape[0]
    c = np.array([s // 2, s // 2], dtype=np.float64)
    out = np.empty((n_rotations,) + patch.shape)
    for r in range(n_rotations):
        ang = 2.0 * np.pi * r / n_rotations
        cs, sn = np.cos(ang), np.sin(ang)
        rot = np.array([[cs, -sn], [sn, cs]])
        out[r], _ = warp_pixels(patch, rot, c - rot @ c)
    return out


@dataclass(frozen=True)
class HeuristicScorer:
    """Goal-difference stand-in for a learned goal-conditioned scorer.

    q_pick: Gaussian-blurred surplus (current - goal height)^+ on occupied
    pixels. q_place: ZNCC between the object cut at the pick argmax, rotated
    per bin, and the deficit (goal - current height)^+ painted with goal
    colours; negative correlations clamp to zero.
    """

    side: int = DEFAULT_MASK_SIDE
    n_rotations: int = N_ROTATIONS
    pick_sigma: float = 3.0
    eps_h: float = 0.002
    thickness_prior: float | None = 0.03
    height_scale: float | None = None

    def _scale(self, o_g: Observation) -> float:
        if self.height_scale is not None:
            return self.height_scale
        return float(o_g.height.max()) or 1.0

    def pick_map(self, o: Observation, o_g: Observation) -> np.ndarray:
        occupied = o.height > self.eps_h
        surplus = np.where(occupied, np.maximum(o.height - o_g.height, 0.0), 0.0) / self._scale(o_g)
        q = ndimage.gaussian_filter(surplus, self.pick_sigma, mode="constant")
        q[~occupied] = 0.0
        return np.maximum(q, 0.0)

    def place_target(self, o: Observation, o_g: Observation) -> np.ndarray:
        deficit = np.maximum(o_g.height - o.height, 0.0)
        need = deficit > self.eps_h
        scale = self._scale(o_g)
        rgb = np.where(need[..., None], o_g.rgb, 0.0)
        return np.concatenate([rgb, np.where(need, deficit, 0.0)[..., None] / scale], axis=-1)

    def place_map(self, o: Observation, o_g: Observation, pick: PixelPose) -> np.ndarray:
        H, W = o.shape
        cut = cut_object(o, (pick.u, pick.v), self.side, self.eps_h, self.thickness_prior)
        if cut.empty:
            return np.zeros((H, W, self.n_rotations))
        obj = np.concatenate([cut.rgb, cut.relative_height[..., None] / self._scale(o_g)], axis=-1)
        templates = rotated_templates(crop_square(obj, (pick.u, pick.v), self.side), self.n_rotations)
        return np.maximum(zncc_maps(self.place_target(o, o_g), templates), 0.0)

    def score(self, o: Observation, o_g: Observation) -> ActionValueMaps:
        if o.shape != o_g.shape:
            raise ValueError("observation and goal dimensions differ")
        q_pick = self.pick_map(o, o_g)
        pick = PixelPose(*np.unravel_index(int(np.argmax(q_pick)), q_pick.shape), 0)
        return ActionValueMaps(q_pick, self.place_map(o, o_g, pick))
