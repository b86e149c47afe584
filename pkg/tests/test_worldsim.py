import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely import affinity
from shapely.geometry import LineString, Point, box

from centaur_sim import geometry as g
from centaur_sim import worldsim as w
from centaur_sim.errors import InvalidParameterError, SchemaVersionError, UnknownCategoryError

from conftest import empty_scene, straight


def ego_polygon(x, y, heading):
    poly = box(-w.EGO_HALF_LENGTH, -w.EGO_HALF_WIDTH, w.EGO_HALF_LENGTH, w.EGO_HALF_WIDTH)
    return affinity.translate(affinity.rotate(poly, heading, origin=(0, 0), use_radians=True), x, y)


# -- collision geometry ------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-6, 6), st.floats(-6, 6), st.floats(-math.pi, math.pi),
    st.floats(-6, 6), st.floats(-6, 6), st.floats(0.2, 3), st.floats(0.2, 3),
)
def test_box_overlap_matches_shapely(x, y, h, ox, oy, hl, hw):
    ours = bool(w.boxes_overlap(np.array([x, y]), np.array(h), np.array([ox, oy]), np.array([hl, hw])))
    ego = ego_polygon(x, y, h)
    obs = box(ox - hl, oy - hw, ox + hl, oy + hw)
    # skip near-touching configurations where float rounding decides
    if ego.distance(obs) < 1e-7 and not ego.intersection(obs).area > 1e-7:
        return
    assert ours == ego.intersects(obs)


def test_no_collision_examples():
    traj = straight(5.0)
    assert w.score_no_collision(empty_scene(), traj) == 1.0
    x20, y20 = traj.poses[19, :2]
    blocked = empty_scene(obstacles=[w.Obstacle(x20, y20, 0.0, 0.0, 1.0, 1.0)])
    assert w.score_no_collision(blocked, traj) == 0.0


def collision_oracle(scene, traj, times=g.TIMES):
    for (x, y, h), t in zip(traj.poses, times):
        ego = ego_polygon(x, y, h)
        for o in scene.obstacles:
            cx, cy = o.x + o.vx * t, o.y + o.vy * t
            if ego.intersects(box(cx - o.hl, cy - o.hw, cx + o.hl, cy + o.hw)):
                return 0.0
    return 1.0


def test_crossing_obstacle_that_passed_earlier():
    traj = straight(5.0)  # reaches x = 10 at t = 2.0 s
    # a pedestrian crosses x = 10 from right to left at 3 m/s, clearing the lane ~1 s early
    ped = w.Obstacle(10.0, -2.0, 0.0, 3.0, 0.4, 0.4)
    scene = empty_scene(obstacles=[ped])
    assert collision_oracle(scene, traj) == 1.0
    assert w.score_no_collision(scene, traj) == 1.0
    late = empty_scene(obstacles=[w.Obstacle(10.0, -5.0, 0.0, 2.5, 0.4, 0.4)])
    assert w.score_no_collision(late, traj) == collision_oracle(late, traj) == 0.0


def test_no_collision_matches_polygon_oracle_on_generated_scenes(small_vocab):
    rng = np.random.default_rng(0)
    for seed in range(6):
        scene = w.generate_scene(w.ALL_CATEGORIES[seed % 11], seed, density=2.0)
        for i in rng.choice(small_vocab.k, 8, replace=False):
            t = small_vocab[int(i)]
            assert w.score_no_collision(scene, t) == collision_oracle(scene, t)


# -- TTC ------------------------------------------------------------------


def test_ttc_examples():
    traj = straight(10.0)
    assert w.score_ttc(empty_scene(), traj) == 1.0
    lead = w.Obstacle(30.0, 0.0, 10.0, 0.0, 2.25, 1.0)
    assert w.score_ttc(empty_scene(obstacles=[lead]), traj) == 1.0
    # stopped car 45 m ahead: not hit within 4 s at 10 m/s but projection reaches it
    stopped = w.Obstacle(45.0, 0.0, 0.0, 0.0, 2.25, 1.0)
    scene = empty_scene(obstacles=[stopped])
    assert w.score_no_collision(scene, traj) == 1.0
    assert w.score_ttc(scene, traj) == 0.0


def test_ttc_matches_projection_oracle():
    traj = straight(8.0)
    scene = empty_scene(obstacles=[w.Obstacle(40.0, 0.0, 0.0, 0.0, 2.25, 1.0)])
    vel = w.velocities(traj.poses[None])[0]
    hit = False
    for i, ((x, y, h), t) in enumerate(zip(traj.poses, g.TIMES)):
        for j in range(11):
            dt = 0.1 * j
            ego = ego_polygon(x + vel[i, 0] * dt, y + vel[i, 1] * dt, h)
            if ego.intersects(box(40 - 2.25, -1, 40 + 2.25, 1)):
                hit = True
    assert w.score_ttc(scene, traj) == (0.0 if hit else 1.0)


def test_collision_implies_ttc_zero(small_vocab):
    for seed in range(8):
        scene = w.generate_scene(w.ALL_CATEGORIES[seed % 11], seed + 40, density=3.0)
        table = w.expert_table(scene, small_vocab)
        assert np.all(table[table[:, 0] == 0, 4] == 0)


# -- drivable area, comfort, progress ------------------------------------


def test_drivable_area_examples():
    traj = straight(5.0)
    assert w.score_drivable_area(empty_scene(2.0), traj) == 1.0
    cl = w.build_centerline(0.0, 0.05, 0.0)
    curving = w.Scene(w.EgoStatus(5, 0, "left"), w.Corridor(cl, 2.0), ())
    d = LineString(cl).distance(Point(*traj.poses[-1, :2]))
    assert d > 2.0
    assert w.score_drivable_area(curving, traj) == 0.0
    # closed boundary: lateral error exactly equal to the half width
    assert w.score_drivable_area(empty_scene(2.0), straight(5.0, 2.0)) == 1.0
    assert w.score_drivable_area(empty_scene(2.0), straight(5.0, 2.0 + 1e-9)) == 0.0


def test_point_to_polyline_matches_shapely():
    cl = w.build_centerline(5.0, -0.04, 0.3)
    corridor = w.Corridor(cl, 3.0)
    pts = np.random.default_rng(1).uniform(-20, 60, size=(200, 2))
    line = LineString(cl)
    expected = [line.distance(Point(p)) for p in pts]
    assert np.allclose(w.point_to_polyline(pts, corridor), expected, atol=1e-9)


def test_comfort_examples():
    assert w.score_comfort(empty_scene(), straight(5.0)) == 1.0
    jump = straight(5.0).poses.copy()
    jump[20:, 0] += 5.0
    assert w.score_comfort(empty_scene(), g.Trajectory(jump)) == 0.0
    assert w.score_comfort(empty_scene(), g.Trajectory(g.arc_poses(5.0, 0.0, 0.1))) == 1.0


def test_progress_examples(tiny_vocab):
    scene = empty_scene(3.0)
    table = w.expert_table(scene, tiny_vocab)
    best = int(np.argmax(table[:, 2]))
    assert w.score_progress(scene, tiny_vocab[best], tiny_vocab) == 1.0
    still = g.Trajectory(np.zeros((40, 3)))
    assert w.score_progress(scene, still, tiny_vocab) == 0.0
    denom = max(
        w.progress_batch(scene, t.poses) for t in tiny_vocab
        if w.score_no_collision(scene, t) == 1 and w.score_drivable_area(scene, t) == 1
    )
    half = straight(denom / 8.0)  # endpoint at denom / 2
    assert w.score_progress(scene, half, tiny_vocab) == pytest.approx(0.5, abs=1e-9)


def test_progress_normalization_reaches_one(small_vocab):
    for seed in range(5):
        scene = w.generate_scene("NONE", seed)
        table = w.expert_table(scene, small_vocab)
        feasible = (table[:, 0] == 1) & (table[:, 1] == 1)
        if feasible.any():
            assert table[feasible, 2].max() == 1.0


# -- PDMS and the expert ------------------------------------------------------


def test_pdm_score_examples():
    assert w.pdm_score((1, 1, 1, 1, 1)) == 1.0
    assert w.pdm_score((0, 1, 1, 1, 1)) == 0.0
    assert w.pdm_score(w.SubScores(1, 1, 0.8, 1, 0.5)) == pytest.approx(8.5 / 12, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=5), st.integers(0, 4), st.floats(0, 1))
def test_pdm_score_monotone(sub, idx, bump):
    raised = list(sub)
    raised[idx] = max(raised[idx], bump)
    assert w.pdm_score(raised) >= w.pdm_score(sub)


def test_expert_score_matches_components(small_vocab):
    scene = w.generate_scene("OTLC", 3)
    table = w.expert_table(scene, small_vocab)
    for i in (0, 5, 17, 40):
        t = small_vocab[i]
        sub = w.expert_score(scene, t, small_vocab)
        assert sub.as_tuple() == (
            w.score_no_collision(scene, t), w.score_drivable_area(scene, t),
            w.score_progress(scene, t, small_vocab), w.score_comfort(scene, t), w.score_ttc(scene, t),
        )
        assert np.array_equal(table[i], sub.as_tuple())


def test_expert_empty_scene_and_blocked_lane(tiny_vocab):
    scene = empty_scene(3.0)
    table = w.expert_table(scene, tiny_vocab)
    best = int(np.argmax(table[:, 2]))
    assert tuple(table[best]) == (1.0, 1.0, 1.0, 1.0, 1.0)
    blocked = empty_scene(3.0, [w.Obstacle(8.0, 0.0, 0.0, 0.0, 2.25, 1.0)])
    sub = w.expert_score(blocked, straight(5.0), tiny_vocab)
    assert sub.nc == 0.0 and w.pdm_score(sub) == 0.0


# -- scene generation ---------------------------------------------------------


def test_generate_scene_is_deterministic():
    assert w.generate_scene("NONE", 7) == w.generate_scene("NONE", 7)
    with pytest.raises(UnknownCategoryError) as err:
        w.generate_scene("XYZ", 1)
    assert err.value.code == "unknown-category"


@pytest.mark.parametrize("seed", range(8))
def test_category_contracts(seed):
    yld = w.generate_scene("YLD", seed)
    crossing = [o for o in yld.obstacles if o.speed <= 2.0 and abs(o.vy) > 0.5 * o.speed]
    assert crossing
    assert w.generate_scene("NLA", seed).corridor.half_width >= 6.0


@pytest.mark.parametrize("category", w.ALL_CATEGORIES)
def test_generated_scenes_are_admissible(category):
    vocab = w.default_test_vocabulary()
    for seed in range(4):
        scene = w.generate_scene(category, seed, density=1.0)
        assert w.pdm_scores(w.expert_table(scene, vocab)).max() > 0


def test_generate_stream_contracts():
    one = w.generate_stream(1, ["YLD"], seed=4)
    assert one[0] == w.generate_scene("YLD", 4)
    s = w.generate_stream(16, seed=3, clip_length=8)
    assert [f.frame_index for f in s] == list(range(16))
    for a, b in zip(s, s[1:]):
        if a.seed == b.seed:  # same clip
            assert len(a.obstacles) == len(b.obstacles)
    again = w.generate_stream(16, seed=3, clip_length=8)
    assert all(x == y for x, y in zip(s, again))
    with pytest.raises(UnknownCategoryError):
        w.generate_stream(3, ["BAD"])


def test_scene_validation():
    with pytest.raises(InvalidParameterError):
        w.EgoStatus(25.0, 0.0, "straight")
    with pytest.raises(InvalidParameterError):
        w.Corridor(((0, 0), (1, 0)), 9.0)
    with pytest.raises(InvalidParameterError):
        w.Corridor(((0, 0), (0, 0)), 3.0)
    with pytest.raises(InvalidParameterError):
        w.Obstacle(0, 0, 30.0, 0, 1, 1)
    with pytest.raises(InvalidParameterError):
        w.SubScores(1.2, 1, 1, 1, 1)


def test_scene_file_round_trip(tmp_path):
    scenes = w.generate_stream(6, seed=2, density=1.0)
    path = tmp_path / "s.jsonl"
    w.save_scenes(scenes, path)
    assert w.load_scenes(path) == scenes
    path.write_text(path.read_text().replace('"format_version": 1', '"format_version": 2'))
    with pytest.raises(SchemaVersionError):
        w.load_scenes(path)
