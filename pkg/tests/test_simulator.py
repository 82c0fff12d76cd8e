import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rearrange.geometry import PickPlaceAction, PoseSE2, WorkspaceCalib
from rearrange.simulator import (
    TABLE_COLOR,
    TASK_NAMES,
    BlockState,
    Footprint,
    OracleError,
    SpawnError,
    TaskSpec,
    TaskSpecError,
    WorldState,
    all_tasks,
    apply_action,
    best_assignment,
    block_in_place,
    check_success,
    find_episodes,
    get_task,
    load_episode,
    load_task,
    oracle_policy,
    rate_of_progress,
    record_demo,
    render,
    sample_random_action,
    save_episode,
)
from rearrange.simulator.tasks import BlockSpec, sample_free_pose

RED = (0.85, 0.2, 0.15)
SQ = Footprint("square", 0.04, 0.04)


def blk(i, x, y, th=0.0, z=0.0, fp=SQ, color=RED, t=0.03):
    return BlockState(i, fp, t, color, PoseSE2(x, y, th), z)


def world(*blocks):
    return WorldState(tuple(blocks))


# --- render -------------------------------------------------------------------


def test_render_empty():
    o = render(world())
    assert np.all(o.height == 0) and np.all(o.rgb == np.array(TABLE_COLOR))


def test_render_block_and_stack():
    o = render(world(blk(0, 0.25, 0.25)))
    cal = WorkspaceCalib()
    X, Y = cal.pixel_centers()
    inside = (np.abs(X - 0.25) <= 0.02) & (np.abs(Y - 0.25) <= 0.02)
    assert np.all(o.height[inside] == 0.03) and np.all(o.height[~inside] == 0)
    assert np.all(o.rgb[inside] == np.array(RED))
    s = render(world(blk(0, 0.25, 0.25), blk(1, 0.26, 0.25, z=0.03)))
    assert s.height.max() == pytest.approx(0.06)


def test_render_deterministic():
    w = load_task(get_task("pyramid"), 3)[0]
    assert render(w).equals(render(w))


# --- apply_action -----------------------------------------------------------------


def test_failed_pick_is_noop():
    w = world(blk(0, 0.25, 0.25))
    a = PickPlaceAction(PoseSE2(0.1, 0.1, 0), PoseSE2(0.3, 0.3, 0))
    assert apply_action(w, a) is w


def test_translate_lone_block():
    w = world(blk(0, 0.1, 0.1, th=0.3))
    w2 = apply_action(w, PickPlaceAction(PoseSE2(0.1, 0.1, 0), PoseSE2(0.3, 0.2, 0)))
    b = w2.block(0)
    assert (b.pose.x, b.pose.y, b.z) == pytest.approx((0.3, 0.2, 0.0))
    assert b.pose.theta == pytest.approx(0.3)


def test_off_centre_grasp_rotates_about_grasp_point():
    w = world(blk(0, 0.2, 0.2))
    a = PickPlaceAction(PoseSE2(0.21, 0.2, 0), PoseSE2(0.3, 0.3, math.pi / 2))
    b = apply_action(w, a).block(0)
    # centre was 1 cm behind the grasp along x; after a quarter turn it is 1 cm behind along y
    assert (b.pose.x, b.pose.y) == pytest.approx((0.3, 0.29))
    assert b.pose.theta == pytest.approx(math.pi / 2)


def test_stack_support_rule():
    w = world(blk(0, 0.1, 0.1), blk(1, 0.3, 0.3))
    w2 = apply_action(w, PickPlaceAction(PoseSE2(0.1, 0.1, 0), PoseSE2(0.3, 0.3, 0)))
    assert w2.block(0).z == pytest.approx(0.03)
    assert not w2.unstable


def test_overhang_flags_unstable():
    w = world(blk(0, 0.1, 0.1), blk(1, 0.3, 0.3))
    w2 = apply_action(w, PickPlaceAction(PoseSE2(0.1, 0.1, 0), PoseSE2(0.33, 0.3, 0)))
    assert w2.block(0).z == pytest.approx(0.03) and w2.unstable
    assert not check_success(w2, w2)


def test_topmost_block_is_picked():
    w = world(blk(0, 0.25, 0.25), blk(1, 0.25, 0.25, z=0.03))
    w2 = apply_action(w, PickPlaceAction(PoseSE2(0.25, 0.25, 0), PoseSE2(0.1, 0.1, 0)))
    assert w2.block(1).z == 0.0 and (w2.block(1).pose.x, w2.block(1).pose.y) == pytest.approx((0.1, 0.1))
    assert w2.block(0).pose == w.block(0).pose


@given(st.integers(0, 10_000), st.floats(0.03, 0.47), st.floats(0.03, 0.47), st.floats(0, 6.28))
@settings(max_examples=40, deadline=None)
def test_apply_action_conserves_blocks(seed, x, y, th):
    w, _ = load_task(get_task("square"), seed)
    b = w.blocks[seed % len(w.blocks)]
    w2 = apply_action(w, PickPlaceAction(PoseSE2(b.pose.x, b.pose.y, 0), PoseSE2(x, y, th)))
    assert sorted((b.id, b.kind) for b in w2.blocks) == sorted((b.id, b.kind) for b in w.blocks)
    assert all(b.z >= 0 for b in w2.blocks)
    assert render(w2).equals(render(apply_action(w, PickPlaceAction(PoseSE2(b.pose.x, b.pose.y, 0), PoseSE2(x, y, th)))))


# --- tasks ----------------------------------------------------------------------


def test_fourteen_tasks_shipped():
    assert len(TASK_NAMES) == 14 and len(all_tasks()) == 14
    with pytest.raises(KeyError):
        get_task("nope")


@pytest.mark.parametrize("name", TASK_NAMES)
def test_goal_is_successful_and_roundtrips(name, tmp_path):
    spec = get_task(name)
    g = spec.goal_world()
    assert check_success(g, g)
    spec.to_json(tmp_path / "t.json")
    assert TaskSpec.from_json(tmp_path / "t.json") == spec


def test_load_task_deterministic_and_disjoint():
    spec = get_task("tower")
    w1, g1 = load_task(spec, 11)
    w2, _ = load_task(spec, 11)
    assert w1 == w2
    assert all(b.z == 0 for b in w1.blocks) and len(w1.blocks) == 3
    for a, b in itertools.combinations(w1.blocks, 2):
        assert a.polygon().intersection(b.polygon()).area == 0
    assert sorted(round(b.z, 9) for b in g1.blocks) == [0.0, 0.03, 0.06]


def test_task_spec_validation():
    bs = BlockSpec(SQ, 0.03, RED)
    with pytest.raises(TaskSpecError):
        TaskSpec("x", (bs, bs), ((PoseSE2(0.2, 0.2), 0.0),), (0, 0, 0.5, 0.5))
    with pytest.raises(TaskSpecError):
        TaskSpec("x", (bs, bs), ((PoseSE2(0.2, 0.2), 0.0), (PoseSE2(0.21, 0.2), 0.0)), (0, 0, 0.5, 0.5))
    with pytest.raises(TaskSpecError):
        TaskSpec("x", (bs,), ((PoseSE2(0.2, 0.2), 0.03),), (0, 0, 0.5, 0.5))


def test_spawn_error_when_no_room():
    rng = np.random.default_rng(0)
    with pytest.raises(SpawnError):
        sample_free_pose(rng, SQ, (0, 0, 0.03, 0.03), [], max_attempts=50)


# --- metrics ----------------------------------------------------------------------


def test_success_thresholds():
    g = world(blk(0, 0.25, 0.25))
    assert check_success(g, g)
    assert not check_success(world(blk(0, 0.262, 0.25)), g)  # 1.2 cm
    assert check_success(world(blk(0, 0.259, 0.25)), g)
    assert check_success(world(blk(0, 0.25, 0.25, th=math.radians(14))), g)
    assert check_success(world(blk(0, 0.25, 0.25, th=math.radians(104))), g)
    assert not check_success(world(blk(0, 0.25, 0.25, th=math.radians(16))), g)
    assert not check_success(world(blk(0, 0.25, 0.25, z=0.006)), g)


def test_rect_and_circle_symmetry():
    rect = Footprint("rect", 0.06, 0.03)
    g = world(blk(0, 0.25, 0.25, fp=rect))
    assert check_success(world(blk(0, 0.25, 0.25, th=math.pi, fp=rect)), g)
    assert not check_success(world(blk(0, 0.25, 0.25, th=math.pi / 2, fp=rect)), g)
    circ = Footprint("circle", 0.04, 0.04)
    assert check_success(world(blk(0, 0.25, 0.25, th=1.0, fp=circ)), world(blk(0, 0.25, 0.25, fp=circ)))


def test_progress_half_done():
    g = world(*(blk(i, 0.1 + 0.1 * i, 0.25) for i in range(4)))
    w = world(blk(0, 0.1, 0.25), blk(1, 0.2, 0.25), blk(2, 0.1, 0.4), blk(3, 0.3, 0.4))
    assert rate_of_progress(w, g) == 0.5
    assert rate_of_progress(g, g) == 1.0


def test_assignment_is_permutation_invariant():
    # swapping identities of identical blocks changes nothing
    g = world(blk(0, 0.1, 0.1), blk(1, 0.3, 0.3))
    w = world(blk(0, 0.3, 0.3), blk(1, 0.1, 0.1))
    assert check_success(w, g)
    assert best_assignment(w, g) == {0: 1, 1: 0}


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(30):
        slots = [blk(i, *rng.uniform(0.05, 0.45, 2)) for i in range(4)]
        blocks = []
        for i in range(4):
            s = slots[rng.integers(4)]
            blocks.append(blk(i, s.pose.x + rng.normal(0, 0.006), s.pose.y + rng.normal(0, 0.006)))
        w, g = world(*blocks), world(*slots)
        brute = max(sum(block_in_place(blocks[p[j]], slots[j]) for j in range(4)) for p in itertools.permutations(range(4)))
        assert rate_of_progress(w, g) == brute / 4


def test_multiset_mismatch_raises():
    blue = (0.1, 0.3, 0.8)
    with pytest.raises(ValueError):
        check_success(world(blk(0, 0.1, 0.1, color=blue)), world(blk(0, 0.1, 0.1)))


# --- oracle & random actions ------------------------------------------------------


def test_oracle_tower_three_steps():
    spec = get_task("tower")
    w, g = load_task(spec, 0)
    for _ in range(3):
        w = apply_action(w, oracle_policy(w, g))
    assert check_success(w, g)
    with pytest.raises(ValueError):
        oracle_policy(w, g)


def test_oracle_single_block():
    g = world(blk(0, 0.25, 0.25, th=0.5))
    w = world(blk(0, 0.1, 0.1, th=2.0))
    assert check_success(apply_action(w, oracle_policy(w, g)), g)


def test_oracle_error_without_support():
    # a slot needing a support block that does not exist in the goal's kind
    blue = (0.1, 0.3, 0.8)
    g = world(blk(0, 0.25, 0.25, color=blue), blk(1, 0.25, 0.25, z=0.03))
    w = world(blk(0, 0.25, 0.25), blk(1, 0.1, 0.1, color=blue))
    with pytest.raises(OracleError):
        oracle_policy(w, g)


def test_random_action_properties():
    with pytest.raises(ValueError):
        sample_random_action(world(), 0)
    w1 = world(blk(0, 0.2, 0.3))
    a = sample_random_action(w1, 5)
    assert (a.pick.x, a.pick.y) == (0.2, 0.3)
    w, _ = load_task(get_task("pyramid"), 0)
    rng = np.random.default_rng(0)
    for i in range(1000):
        a = sample_random_action(w, rng)
        w2 = apply_action(w, a)
        moved = next(b for b in w2.blocks if b.pose != w.block(b.id).pose)
        assert moved.z == 0
        assert all(moved.polygon().distance(o.polygon()) > 0 for o in w2.blocks if o.id != moved.id)
    assert sample_random_action(w, 3) == sample_random_action(w, 3)


def test_record_demo_contract():
    spec = get_task("tower")
    ep = record_demo(spec, 2, n_random=0)
    assert len(ep) == 3
    assert ep.final_observation.equals(render(ep.worlds[-1]))
    ep2 = record_demo(spec, 2, n_random=2)
    w, _ = load_task(spec, 2)
    keepout = [b.polygon() for b in spec.goal_world().blocks]
    assert ep2.steps[0][1] == sample_random_action(w, (2, 7919, 0), keepout)
    assert check_success(ep2.worlds[-1], spec.goal_world())
    assert ep2.n_random == 2 and len(ep2) >= 2 + 3


def test_episode_roundtrip(tmp_path):
    ep = record_demo(get_task("row"), 1)
    save_episode(ep, tmp_path / "e1")
    save_episode(ep, tmp_path / "e2", dump_images=False)
    assert find_episodes(tmp_path) == [tmp_path / "e1", tmp_path / "e2"]
    a, b = load_episode(tmp_path / "e1"), load_episode(tmp_path / "e2")
    assert [s[1] for s in a.steps] == [s[1] for s in ep.steps]
    assert all(o.equals(p) for (o, _), (p, _) in zip(b.steps, ep.steps))
    # images hold quantised copies of the same rasters
    assert all(np.abs(o.height - p.height).max() <= 5e-4 for (o, _), (p, _) in zip(a.steps, ep.steps))
    recs = [json.loads(x) for x in (tmp_path / "e1" / "episode.jsonl").read_text().splitlines()]
    assert all(r["schema_version"] == 1 for r in recs)
