import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from diffdrive.errors import ValidationError
from diffdrive.world import (
    AgentTrack,
    MapPolyline,
    Scene,
    SynthConfig,
    WorldParams,
    check_collision,
    check_offroad,
    fit_actions,
    progress_along_route,
    rollout_dynamics,
    synth_scenarios,
    wrap_angle,
)
from diffdrive.world.geometry import PolylineChain, rect_corners, rects_overlap, resample_polyline
from diffdrive.world.predicates import progress_per_step
from diffdrive.world.scene import scenario_from_json, scenario_to_json
from diffdrive.rng import make_rng

WP = WorldParams()


def make_scene(agents, map_polys=None, route=None, target=10.0):
    if map_polys is None:
        lane = np.column_stack([np.linspace(-20, 200, 45), np.zeros(45), np.zeros(45)])
        map_polys = [MapPolyline("lane_center", lane)]
    if route is None:
        route = [MapPolyline("route", p.waypoints.copy()) for p in map_polys[:1]]
    history = agents[0].states.shape[0]
    return Scene(dt=0.5, history_len=history, future_len=10, ego_id=agents[0].agent_id,
                 agents=agents, map_polylines=map_polys, route_polylines=route,
                 target_distance=target)


def track(agent_id, states, kind="vehicle", length=4.8, width=2.0):
    return AgentTrack(agent_id, kind, length, width, np.asarray(states, dtype=float))


def still_track(agent_id, x, y, heading=0.0, speed=0.0, steps=4, **kw):
    return track(agent_id, np.tile([x, y, heading, speed], (steps, 1)), **kw)


# -- dynamics ------------------------------------------------------------------

def test_rollout_constant_velocity_straight_line():
    start = np.array([[0.0, 0.0, 0.0, 2.0]])
    states = rollout_dynamics(start, np.zeros((1, 1, 2)), 0.5)
    assert np.allclose(states[0, 0], [1.0, 0.0, 0.0, 2.0])


def test_rollout_acceleration_semi_implicit():
    # updated speed drives the position: v' = 2.5, x' = 2.5 * 0.5
    start = np.array([[0.0, 0.0, 0.0, 2.0]])
    states = rollout_dynamics(start, np.array([[[1.0, 0.0]]]), 0.5)
    assert np.allclose(states[0, 0], [1.25, 0.0, 0.0, 2.5])


def test_rollout_speed_clamped_at_zero():
    start = np.array([[0.0, 0.0, 0.0, 0.0]])
    states = rollout_dynamics(start, np.array([[[-1.0, 0.0]]]), 0.5)
    assert np.allclose(states[0, 0], [0.0, 0.0, 0.0, 0.0])


def test_rollout_rejects_nonfinite_action():
    start = np.zeros((2, 4))
    actions = np.zeros((2, 3, 2))
    actions[1, 2, 0] = np.nan
    with pytest.raises(ValidationError, match="agent 1 at step 2"):
        rollout_dynamics(start, actions, 0.5)


def test_rollout_bitwise_deterministic():
    rng = make_rng(0, 1)
    start = rng.normal(size=(3, 4))
    start[:, 3] = np.abs(start[:, 3])
    actions = rng.normal(size=(3, 10, 2))
    a = rollout_dynamics(start, actions, 0.5)
    b = rollout_dynamics(start, actions, 0.5)
    assert np.array_equal(a, b)


def test_action_fitting_is_exact_inverse():
    rng = make_rng(0, 2)
    start = np.abs(rng.normal(size=(4, 4)))
    actions = rng.uniform(-1, 1, size=(4, 10, 2))
    states = rollout_dynamics(start, actions, 0.5)
    refit = fit_actions(start, states, 0.5)
    re_states = rollout_dynamics(start, refit, 0.5)
    assert np.abs(re_states - states).max() < 1e-9


@given(st.floats(-50, 50))
def test_wrap_angle_period(theta):
    assert wrap_angle(theta + 2 * np.pi) == pytest.approx(wrap_angle(theta), abs=1e-9)
    assert -np.pi < wrap_angle(theta) <= np.pi


# -- collision -----------------------------------------------------------------

def test_disjoint_rectangles_no_collision():
    a = rect_corners(0.0, 0.0, 0.0, 2.0, 1.0)
    b = rect_corners(5.0, 0.0, 0.0, 2.0, 1.0)
    assert not rects_overlap(a, b)


def test_identical_rectangles_collide():
    a = rect_corners(1.0, 2.0, 0.3, 2.0, 1.0)
    assert rects_overlap(a, a.copy())


def _grid_overlap(xa, ya, ha, la, wa, xb, yb, hb, lb, wb, res=0.01):
    """1 cm grid-sampling containment oracle for oriented rectangle overlap."""
    def contains(px, py, x, y, h, l, w):
        c, s = np.cos(-h), np.sin(-h)
        lx = c * (px - x) - s * (py - y)
        ly = s * (px - x) + c * (py - y)
        return (np.abs(lx) <= l / 2) & (np.abs(ly) <= w / 2)

    for (x1, y1, h1, l1, w1), (x2, y2, h2, l2, w2) in (
        ((xa, ya, ha, la, wa), (xb, yb, hb, lb, wb)),
        ((xb, yb, hb, lb, wb), (xa, ya, ha, la, wa)),
    ):
        us = np.arange(-l1 / 2, l1 / 2 + res / 2, res)
        vs = np.arange(-w1 / 2, w1 / 2 + res / 2, res)
        uu, vv = np.meshgrid(us, vs)
        c, s = np.cos(h1), np.sin(h1)
        px = x1 + c * uu - s * vv
        py = y1 + s * uu + c * vv
        if contains(px, py, x2, y2, h2, l2, w2).any():
            return True
    return False


def test_rotated_near_touching_matches_grid_oracle():
    # 45-degree rectangles around near-contact separations
    for gap in (-0.05, 0.05, 0.2, -0.2):
        d = 1.0 * np.sqrt(2) + gap  # touching at corners when gap = 0
        sat = rects_overlap(
            rect_corners(0.0, 0.0, np.pi / 4, np.sqrt(2), np.sqrt(2)),
            rect_corners(d, 0.0, np.pi / 4, np.sqrt(2), np.sqrt(2)),
        )
        grid = _grid_overlap(0, 0, np.pi / 4, np.sqrt(2), np.sqrt(2),
                             d, 0, np.pi / 4, np.sqrt(2), np.sqrt(2))
        assert sat == grid


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_collision_symmetric_and_rigid_invariant(seed):
    rng = make_rng(seed, 3)
    pa = rng.uniform(-3, 3, 2)
    pb = rng.uniform(-3, 3, 2)
    ha, hb = rng.uniform(-np.pi, np.pi, 2)
    la, wa, lb, wb = rng.uniform(0.5, 4.0, 4)
    qa = rect_corners(pa[0], pa[1], ha, la, wa)
    qb = rect_corners(pb[0], pb[1], hb, lb, wb)
    assert rects_overlap(qa, qb) == rects_overlap(qb, qa)
    # rigid transform applied to both
    tx, ty, phi = rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-np.pi, np.pi)
    qa2 = rect_corners(tx + pa[0] * np.cos(phi) - pa[1] * np.sin(phi),
                       ty + pa[0] * np.sin(phi) + pa[1] * np.cos(phi), ha + phi, la, wa)
    qb2 = rect_corners(tx + pb[0] * np.cos(phi) - pb[1] * np.sin(phi),
                       ty + pb[0] * np.sin(phi) + pb[1] * np.cos(phi), hb + phi, lb, wb)
    assert rects_overlap(qa, qb) == rects_overlap(qa2, qb2)


def test_check_collision_reports_first_step_and_matrix():
    ego = still_track(0, 0.0, 0.0, speed=2.0)
    other = still_track(1, 30.0, 0.0)
    scene = make_scene([ego, other])
    fut = np.zeros((2, 10, 4))
    fut[0, :, 0] = np.linspace(1, 10, 10)  # ego drives toward the parked car
    fut[1, :, 0] = 8.0
    report = check_collision(scene, fut)
    assert report.any()
    assert report.matrix.shape == (10, 2)
    assert report.first_step == int(np.argwhere(report.matrix[:, 1])[0, 0])
    assert not report.matrix[:, 0].any()  # ego column stays False


# -- off-road ------------------------------------------------------------------

def test_on_centerline_is_onroad():
    ego = still_track(0, 0.0, 0.0, speed=2.0)
    scene = make_scene([ego])
    fut = np.zeros((10, 4))
    fut[:, 0] = np.linspace(1, 10, 10)
    flags, first = check_offroad(scene, fut, WP)
    assert not flags.any() and first is None


def test_far_lateral_is_offroad():
    ego = still_track(0, 0.0, 0.0)
    scene = make_scene([ego])
    fut = np.zeros((5, 4))
    fut[:, 1] = 10.0
    flags, first = check_offroad(scene, fut, WP)
    assert flags.all() and first == 0


def test_exact_threshold_is_onroad():
    ego = still_track(0, 0.0, 0.0)
    scene = make_scene([ego])
    threshold = WP.lane_half_width + scene.ego.width / 2.0
    fut = np.zeros((3, 4))
    fut[:, 1] = threshold
    flags, _ = check_offroad(scene, fut, WP)
    assert not flags.any()
    fut[:, 1] = threshold + 1e-6
    flags, _ = check_offroad(scene, fut, WP)
    assert flags.all()


# -- progress ------------------------------------------------------------------

def test_progress_reaching_target_is_one():
    ego = still_track(0, 0.0, 0.0, speed=2.0)
    scene = make_scene([ego], target=9.0)
    fut = np.zeros((10, 4))
    fut[:, 0] = np.linspace(1, 9, 10)
    assert progress_along_route(scene, fut) == pytest.approx(1.0, abs=1e-12)


def test_progress_stationary_is_zero():
    ego = still_track(0, 3.0, 0.0)
    scene = make_scene([ego], target=9.0)
    fut = np.tile([3.0, 0.0, 0.0, 0.0], (10, 1))
    assert progress_along_route(scene, fut) == 0.0


def test_progress_half_target_curved_vs_dense_oracle():
    # quarter-circle route, ego traverses half the target arc
    theta = np.linspace(0, np.pi / 2, 60)
    R = 30.0
    route_pts = np.column_stack([R * np.sin(theta), R - R * np.cos(theta), theta])
    route = [MapPolyline("route", resample_polyline(route_pts, 20))]
    lane = [MapPolyline("lane_center", resample_polyline(route_pts, 20))]
    ego = still_track(0, 0.0, 0.0, speed=2.0)
    target = 20.0
    scene = make_scene([ego], map_polys=lane, route=route, target=target)
    chain = PolylineChain(route[0].waypoints)
    end_pose = chain.pose_at(10.0)  # half of target along the arc
    fut = np.zeros((5, 4))
    fut[:, 0] = np.linspace(0.1, end_pose[0], 5)
    fut[:, 1] = np.interp(fut[:, 0], route[0].waypoints[:, 0], route[0].waypoints[:, 1])
    fut[-1, :2] = end_pose[:2]
    got = progress_along_route(scene, fut)

    # densify at 1 cm per segment, keeping the original vertices
    pts = route[0].waypoints[:, :2]
    dense = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(2, int(np.ceil(np.linalg.norm(b - a) / 0.01)) + 1)
        dense.extend(a + t * (b - a) for t in np.linspace(0, 1, n)[1:])
    dense_chain = PolylineChain(np.array(dense))
    s0, _ = dense_chain.project(ego.states[-1, :2])
    s1, _ = dense_chain.project(fut[-1, :2])
    expect = max(0.0, s1 - s0) / target
    assert got == pytest.approx(expect, abs=1e-6)
    assert got == pytest.approx(0.5, abs=1e-3)


def test_progress_monotone_nondecreasing_for_forward_ego():
    logs = synth_scenarios(SynthConfig(n_scenarios=5, future_len=10), seed=4)
    for log in logs:
        scene, fut = log.training_example(WP)
        adv = progress_per_step(scene, fut[0])
        assert (np.diff(adv) > -1e-9).all()


# -- synthesis -----------------------------------------------------------------

def test_synth_deterministic_byte_identical():
    cfg = SynthConfig(n_scenarios=6, future_len=10)
    a = synth_scenarios(cfg, seed=9)
    b = synth_scenarios(cfg, seed=9)
    assert [scenario_to_json(x) for x in a] == [scenario_to_json(y) for y in b]


def test_synth_unknown_template_rejected():
    from diffdrive.errors import ConfigError

    with pytest.raises(ConfigError):
        SynthConfig(templates=("warp_drive",))


def test_scenario_json_roundtrip():
    log = synth_scenarios(SynthConfig(n_scenarios=1, future_len=10), seed=3)[0]
    back = scenario_from_json(scenario_to_json(log))
    assert scenario_to_json(back) == scenario_to_json(log)


def test_lead_vehicle_gap_never_below_idm_minimum():
    from diffdrive.world.synth import IDM_S0

    cfg = SynthConfig(n_scenarios=10, future_len=10, templates=("lead_slowdown",))
    for log in synth_scenarios(cfg, seed=5):
        ego, lead = log.tracks[0], log.tracks[1]
        gap = (np.linalg.norm(lead.states[:, :2] - ego.states[:, :2], axis=1)
               - (ego.length + lead.length) / 2)
        assert gap.min() >= IDM_S0


def test_idm_follower_tracks_independent_reference():
    """Simulate an independent IDM follower behind the logged lead; both it and
    the logged ego must respect the minimum-spacing parameter and agree on the
    gap profile."""
    from diffdrive.world.predicates import chain_from_polylines
    from diffdrive.world.synth import IDM_A, IDM_B, IDM_DELTA, IDM_S0, IDM_T

    cfg = SynthConfig(n_scenarios=3, future_len=10, templates=("lead_slowdown",))
    for log in synth_scenarios(cfg, seed=6):
        ego, lead = log.tracks[0], log.tracks[1]
        half = (ego.length + lead.length) / 2
        chain = chain_from_polylines(log.route_polylines)
        s_lead = chain.project_many(lead.states[:, :2])[0]
        v_lead = lead.states[:, 3]
        v_des = float(ego.states[:, 3].max())

        # independent longitudinal IDM integration with the same stepping rule
        s = float(chain.project(ego.states[0, :2])[0])
        v = float(ego.states[0, 3])
        ref_gap = []
        for t in range(1, log.n_steps):
            gap = max(s_lead[t - 1] - s - half, 0.1)
            s_star = IDM_S0 + max(0.0, v * IDM_T + v * (v - v_lead[t - 1]) / (2 * np.sqrt(IDM_A * IDM_B)))
            a = np.clip(IDM_A * (1 - (v / v_des) ** IDM_DELTA - (s_star / gap) ** 2), -6.0, 6.0)
            v = max(0.0, v + a * log.dt)
            s = s + v * log.dt
            ref_gap.append(s_lead[t] - s - half)
        ref_gap = np.array(ref_gap)
        s_ego = chain.project_many(ego.states[:, :2])[0]
        log_gap = (s_lead - s_ego - half)[1:]
        assert ref_gap.min() >= IDM_S0
        assert log_gap.min() >= IDM_S0
        assert np.abs(ref_gap - log_gap).max() < 5.0


def test_straight_template_futures_fully_onroad():
    cfg = SynthConfig(n_scenarios=4, future_len=10, templates=("straight",))
    for log in synth_scenarios(cfg, seed=7):
        scene, fut = log.training_example(WP)
        flags, _ = check_offroad(scene, fut[0], WP)
        assert not flags.any()


def test_scene_caps_and_ego_first():
    logs = synth_scenarios(SynthConfig(n_scenarios=5, future_len=10), seed=8)
    for log in logs:
        scene = log.scene_at(WP.history_len - 1, WP)
        assert len(scene.agents) <= WP.agent_cap
        assert len(scene.map_polylines) <= WP.polyline_cap
        assert scene.agents[0].agent_id == scene.ego_id


def test_polyline_spacing_validated():
    with pytest.raises(ValidationError):
        MapPolyline("lane_center", np.array([[0.0, 0, 0], [10.0, 0, 0]]))
