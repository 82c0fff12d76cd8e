import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rearrange.geometry import PixelPose, PoseSE2, WorkspaceCalib
from rearrange.proposal import (
    ActionValueMaps,
    EmptyProposalError,
    HeuristicScorer,
    ProposalConfig,
    argmax_place,
    kmeans,
    multimodal_propose,
    propose_from_maps,
    rotated_templates,
    select_pick,
    zncc_maps,
)
from rearrange.simulator import BlockState, Footprint, WorldState, render

CAL = WorkspaceCalib()


def maps_from(q_place, q_pick=None):
    H, W = q_place.shape[:2]
    return ActionValueMaps(np.zeros((H, W)) if q_pick is None else q_pick, q_place)


def test_maps_validation():
    with pytest.raises(ValueError):
        ActionValueMaps(np.zeros((4, 4)), np.zeros((4, 5, 2)))
    with pytest.raises(ValueError):
        ActionValueMaps(np.zeros((4, 4)), -np.ones((4, 4, 2)))
    with pytest.raises(ValueError):
        ActionValueMaps(np.full((4, 4), np.inf), np.zeros((4, 4, 2)))


def test_config_validation():
    with pytest.raises(ValueError):
        ProposalConfig(alpha=0.0)
    with pytest.raises(ValueError):
        ProposalConfig(top_n=2, k=3)


def test_select_pick_examples():
    q = np.zeros((10, 12))
    q[3, 7] = 1.0
    assert select_pick(maps_from(np.zeros((10, 12, 2)), q)) == PixelPose(3, 7, 0)
    assert select_pick(maps_from(np.zeros((10, 12, 2)), np.ones((10, 12)))) == PixelPose(0, 0, 0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_select_pick_matches_scan(seed):
    rng = np.random.default_rng(seed)
    q = rng.integers(0, 5, (9, 11)).astype(float)
    best, arg = -1.0, None
    for u in range(9):
        for v in range(11):
            if q[u, v] > best:
                best, arg = q[u, v], (u, v)
    p = select_pick(maps_from(np.zeros((9, 11, 3)), q))
    assert (p.u, p.v, p.rot_bin) == (*arg, 0)


# --- k-means ------------------------------------------------------------------


def test_kmeans_single_point():
    r = kmeans([(0, 0)], 1)
    assert np.array_equal(r.centers, [[0.0, 0.0]])


def test_kmeans_more_clusters_than_points():
    r = kmeans([(0, 0), (5, 5)], 3)
    assert r.k == 2 and sorted(r.labels.tolist()) == [0, 1]


def brute_2means(pts):
    best = math.inf
    n = len(pts)
    for mask in range(1, 2 ** (n - 1)):
        lab = np.array([(mask >> i) & 1 for i in range(n)])
        sse = sum(((pts[lab == j] - pts[lab == j].mean(axis=0)) ** 2).sum() for j in (0, 1))
        best = min(best, sse)
    return best


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_kmeans_two_groups_optimal(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal((10, 10), 2, (rng.integers(3, 9), 2))
    b = rng.normal((10, 110), 2, (rng.integers(3, 9), 2))
    pts = np.vstack([a, b])
    pts = pts[rng.permutation(len(pts))]
    r = kmeans(pts, 2)
    assert r.sse_history[-1] == pytest.approx(brute_2means(pts), rel=1e-9)
    # one centre per group
    assert sorted(round(c[1] / 100) for c in r.centers) == [0, 1]


@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
@settings(max_examples=50, deadline=None)
def test_kmeans_sse_monotone_and_complete(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 100, (rng.integers(k, 60), 2))
    r = kmeans(pts, k)
    h = np.array(r.sse_history)
    assert np.all(np.diff(h) <= 1e-9)
    assert len(r.labels) == len(pts) and set(r.labels.tolist()) <= set(range(r.k))
    assert r.k == min(k, len(pts))
    assert np.array_equal(kmeans(pts, k).labels, r.labels)


# --- proposal (threshold, top-N, cluster) -----------------------------------------


def bumps(H, W, R, peaks):
    uu, vv = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    q = np.zeros((H, W, R))
    for (u, v, r, amp) in peaks:
        q[..., r] += amp * np.exp(-((uu - u) ** 2 + (vv - v) ** 2) / (2 * 3.0**2))
    return q


def test_three_bumps():
    q = bumps(80, 80, 6, [(15, 15, 1, 1.0), (60, 20, 3, 0.9), (40, 65, 5, 0.8)])
    res = propose_from_maps(maps_from(q), ProposalConfig(k=3, top_n=300))
    assert res.places == (PixelPose(15, 15, 1), PixelPose(60, 20, 3), PixelPose(40, 65, 5))
    assert list(res.values) == sorted(res.values, reverse=True)


def test_single_pixel_gives_one_proposal():
    q = np.zeros((10, 10, 4))
    q[4, 6, 2] = 0.7
    res = propose_from_maps(maps_from(q), ProposalConfig(k=3))
    assert res.places == (PixelPose(4, 6, 2),)


def test_zero_map_raises():
    with pytest.raises(EmptyProposalError):
        propose_from_maps(maps_from(np.zeros((5, 5, 2))), ProposalConfig())


def test_argmax_place_ties():
    q = np.ones((4, 4, 3))
    assert argmax_place(maps_from(q)) == PixelPose(0, 0, 0)


def proposal_invariants(q, cfg):
    res = propose_from_maps(maps_from(q), cfg)
    q_max = q.max()
    q_rot = q.max(axis=2)
    n_s = min(int((q_rot > cfg.alpha * q_max).sum()), cfg.top_n)
    assert all(v > cfg.alpha * q_max for v in res.values)
    assert len(res.places) == min(cfg.k, n_s)
    assert len(set(res.places)) == len(res.places)
    assert argmax_place(maps_from(q)) in res.places
    assert list(res.values) == sorted(res.values, reverse=True)
    assert res == propose_from_maps(maps_from(q), cfg)


@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.sampled_from([0.01, 0.3, 0.9]))
@settings(max_examples=80, deadline=None)
def test_proposal_invariants_random_maps(seed, k, alpha):
    rng = np.random.default_rng(seed)
    q = rng.random((24, 20, 4)) ** 4
    q[rng.random(q.shape) < 0.5] = 0.0
    if q.max() == 0:
        q[0, 0, 0] = 1.0
    proposal_invariants(q, ProposalConfig(alpha=alpha, top_n=max(k, int(rng.integers(1, 120))), k=k))


# --- ZNCC -----------------------------------------------------------------------


def zncc_brute(target, tmpl, u, v):
    H, W, C = target.shape
    s = tmpl.shape[0]
    r = s // 2
    pad = np.zeros((H + 2 * r, W + 2 * r, C))
    pad[r : r + H, r : r + W] = target
    win = pad[u : u + s, v : v + s]
    # each channel centred on its own mean, then pooled
    wz = (win - win.mean(axis=(0, 1))).ravel()
    tz = (tmpl - tmpl.mean(axis=(0, 1))).ravel()
    den = np.linalg.norm(wz) * np.linalg.norm(tz)
    return 0.0 if den <= 1e-12 else float(wz @ tz / den)


def test_zncc_matches_brute_force():
    rng = np.random.default_rng(0)
    target = rng.random((23, 19, 2))
    tmpl = rng.random((2, 7, 7, 2))
    got = zncc_maps(target, tmpl)
    for u in range(23):
        for v in range(19):
            for r in range(2):
                assert got[u, v, r] == pytest.approx(zncc_brute(target, tmpl[r], u, v), abs=1e-9)


def test_rotated_templates_quarter_turn():
    rng = np.random.default_rng(1)
    patch = rng.random((9, 9, 2))
    t = rotated_templates(patch, 4)
    assert np.allclose(t[0], patch)
    assert np.abs(t[1] - np.rot90(patch, 1, axes=(0, 1))).max() < 1e-9


# --- heuristic scorer ---------------------------------------------------------------

SQ = Footprint("square", 0.04, 0.04)
RECT = Footprint("rect", 0.06, 0.03)


def wblock(fp, u, v, th, z=0.0):
    x, y = CAL.continuous_to_world(u, v)
    return BlockState(0, fp, 0.03, (0.85, 0.2, 0.15), PoseSE2(x, y, th), z)


def test_matched_scene_has_no_pick_value():
    o = render(WorldState((wblock(SQ, 50, 50, 0.3),)))
    assert np.all(HeuristicScorer().pick_map(o, o) == 0)


def test_single_block_goal_cell():
    w = WorldState((wblock(SQ, 40, 40, 0.0),))
    g = WorldState((wblock(SQ, 110, 100, 0.0),))
    maps = HeuristicScorer().score(render(w), render(g))
    p = select_pick(maps)
    assert abs(p.u - 40) <= 6 and abs(p.v - 40) <= 6
    best = argmax_place(maps)
    assert abs(best.u - 110) <= 1 and abs(best.v - 100) <= 1
    # brute-force scan of the correlation map agrees with the argmax
    q = maps.q_place
    assert q[best.u, best.v, best.rot_bin] == q.max()


def test_rect_needs_quarter_turn():
    w = WorldState((wblock(RECT, 40, 40, 0.0),))
    g = WorldState((wblock(RECT, 110, 100, math.pi / 2),))
    maps = HeuristicScorer().score(render(w), render(g))
    per_bin = maps.q_place.reshape(-1, 36).max(axis=0)
    r = int(np.argmax(per_bin))
    assert min(abs(r - 9), abs(r - 27)) <= 1


def test_scorer_deterministic_and_shaped():
    w = WorldState((wblock(SQ, 40, 40, 0.2),))
    g = WorldState((wblock(SQ, 100, 90, 0.0),))
    s = HeuristicScorer()
    a, b = s.score(render(w), render(g)), s.score(render(w), render(g))
    assert a.q_place.shape == (160, 160, 36) and np.array_equal(a.q_place, b.q_place)
    res = multimodal_propose(render(w), render(g), s, ProposalConfig(k=2))
    assert 1 <= len(res.places) <= 2
