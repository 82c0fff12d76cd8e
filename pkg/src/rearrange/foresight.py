"""Visual foresight: predict the next observation from (observation, action).

Two predictors share the `ForesightPredictor` interface:

* `GeometricPredictor` cuts the object under the pick point out of the
  raster, rotates it about the pick point, and pastes it at the place
  point on top of whatever surface is there.
* `OraclePredictor` replays the action in the simulator; it isolates
  planner quality from foresight error.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import ndimage

from .geometry import (
    PickPlaceAction,
    PoseSE2,
    WorkspaceCalib,
    pose_to_pixel_transform,
    world_to_pixel,
)
from .observation import (
    DEFAULT_MASK_SIDE,
    UNIT_WEIGHTS,
    Observation,
    cut_object,
    l1_distance,
    warp_observation,
    warp_pixels,
)
from .simulator.world import TABLE_COLOR, WorldState, apply_action, render


class ForesightPredictor(Protocol):
    def predict(self, o: Observation, a: PickPlaceAction) -> Observation: ...


@dataclass(frozen=True, eq=False)
class TransitionSample:
    before: Observation
    action: PickPlaceAction
    after: Observation

    def __post_init__(self) -> None:
        if self.before.shape != self.after.shape:
            raise ValueError("before/after dimensions differ")


def _fill_color(o: Observation, region: np.ndarray, support: float, eps_h: float) -> np.ndarray:
    """Colour revealed under a lifted object resting on another object."""
    ring = ndimage.binary_dilation(region) & ~region & (np.abs(o.height - support) < eps_h)
    if ring.any():
        return o.rgb[ring].mean(axis=0)
    return o.rgb[region].mean(axis=0)


def geometric_predict(
    o: Observation,
    a: PickPlaceAction,
    mask_side: int = DEFAULT_MASK_SIDE,
    calib: WorkspaceCalib | None = None,
    eps_h: float = 0.002,
    thickness_prior: float | None = 0.03,
    table_color=TABLE_COLOR,
) -> Observation:
    """Cut, rotate, and paste the picked object.

    1. Cut the above-support object under the pick pixel (see `cut_object`).
    2. Clear it to the support height (table colour over bare table).
    3. Move the cut by the action's rigid motion place o pick^-1.
    4. Composite it at the destination on top of the highest surface
       under its new footprint.

    An empty cut returns the input unchanged.
    """
    if calib is None:
        calib = WorkspaceCalib(H=o.shape[0], W=o.shape[1])
    pick_px = world_to_pixel(calib, a.pick)
    world_to_pixel(calib, a.place)  # bounds check only
    cut = cut_object(o, (pick_px.u, pick_px.v), mask_side, eps_h, thickness_prior)
    if cut.empty:
        return o

    region = cut.region
    height = o.height.copy()
    rgb = o.rgb.copy()
    height[region] = cut.support
    rgb[region] = table_color if cut.support <= eps_h else _fill_color(o, region, cut.support, eps_h)

    stack = np.concatenate(
        [cut.rgb, cut.relative_height[..., None], region[..., None].astype(np.float64)], axis=-1
    )
    rot, t = pose_to_pixel_transform(calib, a.relative_motion())
    moved, _ = warp_pixels(stack, rot, t)
    m = moved[..., 4]
    placed = m >= 0.5
    if placed.any():
        inv = 1.0 / m[placed]
        dest_support = float(height[placed].max())
        height[placed] = dest_support + moved[..., 3][placed] * inv
        rgb[placed] = moved[..., :3][placed] * inv[:, None]
    return Observation(rgb, height)


@dataclass(frozen=True)
class GeometricPredictor:
    calib: WorkspaceCalib = field(default_factory=WorkspaceCalib)
    mask_side: int = DEFAULT_MASK_SIDE
    eps_h: float = 0.002
    thickness_prior: float | None = 0.03
    table_color: tuple = TABLE_COLOR

    def predict(self, o: Observation, a: PickPlaceAction) -> Observation:
        return geometric_predict(
            o, a, self.mask_side, self.calib, self.eps_h, self.thickness_prior, self.table_color
        )


class StalenessWarning(UserWarning):
    """An oracle predictor was asked about an observation it is not tracking."""


def _digest(o: Observation) -> bytes:
    return hashlib.sha1(o.key()).digest()


class OraclePredictor:
    """Ground-truth foresight backed by the simulator.

    Tracks the world behind every observation it has produced, so imagined
    observations deeper in a search tree map back to exact world states.
    The rollout's world is never mutated.
    """

    def __init__(self, world: WorldState, tol: float = 1e-6):
        self.world = world
        self.tol = tol
        self._root_obs = render(world)
        self._worlds: dict[bytes, WorldState] = {_digest(self._root_obs): world}

    def reset(self, world: WorldState) -> None:
        self.__init__(world, self.tol)

    def world_for(self, o: Observation) -> WorldState:
        w = self._worlds.get(_digest(o))
        if w is None:
            drift = l1_distance(o, self._root_obs)
            if drift > self.tol:
                warnings.warn(
                    f"observation not tracked (L1 {drift:.3g} from tracked world)", StalenessWarning, stacklevel=3
                )
            w = self.world
        return w

    def predict(self, o: Observation, a: PickPlaceAction) -> Observation:
        nw = apply_action(self.world_for(o), a)
        no = render(nw)
        self._worlds.setdefault(_digest(no), nw)
        return no


def oracle_predict(tracker: OraclePredictor, a: PickPlaceAction) -> Observation:
    """render(apply_action(tracked world, a)) without touching the rollout."""
    return render(apply_action(tracker.world, a))


def augment_transition(s: TransitionSample, g: PoseSE2, calib: WorkspaceCalib) -> TransitionSample:
    """Apply one rigid motion to both observations and to both action poses."""
    return TransitionSample(
        warp_observation(s.before, g, calib),
        s.action.transformed(g),
        warp_observation(s.after, g, calib),
    )


def equivariance_residual(
    f: ForesightPredictor,
    o: Observation,
    a: PickPlaceAction,
    g: PoseSE2,
    calib: WorkspaceCalib,
    height_scale: float | None = None,
) -> float:
    """Unit-weight L1 between f(g.o, g.a) and g.f(o, a) on pixels valid under the warp."""
    go, valid = warp_observation(o, g, calib, return_valid=True)
    lhs = f.predict(go, a.transformed(g))
    rhs = warp_observation(f.predict(o, a), g, calib)
    if height_scale is None:
        height_scale = float(o.height.max()) or 1.0
    return l1_distance(lhs, rhs, UNIT_WEIGHTS, height_scale, mask=valid)
