"""Smoke tests for the egoplan Python module.

Runs against the CMake-built extension; ctest points PYTHONPATH at the
module's build directory.
"""

import math
import os
import tempfile

import egoplan as ep


def test_kinematics_step():
    st = ep.SelfState(0.0, 0.0, 1.0, 0.0, 10.0)
    out = ep.step(st, ep.Action(0.0, 0.0), ep.StepParams(0.1))
    assert out.x == 1.0 and out.y == 0.0 and out.s == 10.0

    turned = ep.step(st, ep.Action(0.0, 1.0), ep.StepParams(0.1))
    assert abs(turned.ux - 0.995037) < 1e-6
    assert abs(turned.uy + 0.099504) < 1e-5


def test_rollout_straight_line():
    st = ep.SelfState(0.0, 0.0, 1.0, 0.0, 10.0)
    states = ep.rollout(st, [ep.Action()] * 3, ep.StepParams(0.1))
    assert [round(s.x, 9) for s in states] == [1.0, 2.0, 3.0]


def test_mask_geometry():
    rel = ep.SelfState(0.0, 0.0, 1.0, 0.0, 5.0)
    dims = ep.VehicleDims(2.0, 4.0)
    assert ep.mask_reach_x(rel, dims) == 22.0
    car, side = ep.build_masks(rel, dims)
    assert car.shape == (117, 24)
    assert side.min() >= 0.0
    assert (car <= side + 1e-15).all()


def test_mesh_and_raster():
    mesh = ep.mesh_grid()
    assert mesh.shape == (117, 24, 2)
    assert abs(mesh[0, 0, 0] - (-36.1 + 72.2 / 117 / 2)) < 1e-12

    log = ep.make_stress_scenario(ep.StressConfig())
    scene = ep.scene_at(log, 0, ep.make_lanes(3))
    frame = ep.rasterize(scene)
    assert frame.cars.sum() > 0          # lead and rear cars are visible
    assert frame.offroad[0, 0] in (0.0, 1.0)


def test_jerk_cost():
    assert ep.jerk_cost([ep.Action(0, 0), ep.Action(1, 0)]) == 0.5
    assert ep.jerk_cost([ep.Action(2, 1)] * 5) == 0.0


def test_log_round_trip():
    log = ep.make_traffic_scenario(7, 0.4, 3, 2.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "log.csv")
        ep.save_log(log, path)
        back = ep.load_log(path)
    assert back.last_frame() == log.last_frame()
    assert len(back.tracks) == len(log.tracks)
    a = log.tracks[1].states[5]
    b = back.tracks[1].states[5]
    assert a.x == b.x and a.y == b.y and a.s == b.s


def test_plan_decoupled():
    log = ep.make_stress_scenario(ep.StressConfig())
    scene = ep.scene_at(log, 0, ep.make_lanes(3))
    cfg = ep.PlannerConfig()
    cfg.horizon = 8
    cfg.iterations = 4
    plan = ep.plan_decoupled(scene, scene.ego, cfg)
    assert len(plan.j_trace) == 5
    assert len(plan.actions) == 8
    assert all(math.isfinite(j) for j in plan.j_trace)
    assert plan.env_advances == 8
    assert plan.actions[0].accel < 0.0  # braking into the squeeze


def test_coupled_reduction():
    log = ep.make_traffic_scenario(3, 0.3, 3, 1.0)
    scene = ep.scene_at(log, 0, ep.make_lanes(3))
    dec = ep.PlannerConfig()
    dec.horizon = 6
    dec.iterations = 3
    cpl = ep.PlannerConfig()
    cpl.horizon = 6
    cpl.iterations = 3
    cpl.predictor = ep.PredictorKind.coupled_reactive
    cpl.reactive.gain = 0.0
    a = ep.plan_decoupled(scene, scene.ego, dec)
    b = ep.plan_coupled(scene, scene.ego, cpl)
    assert list(a.j_trace) == list(b.j_trace)


def test_episode_zero_action_crashes_in_stress():
    log = ep.make_stress_scenario(ep.StressConfig())
    cfg = ep.EpisodeConfig()
    cfg.lanes = ep.make_lanes(3)
    res = ep.run_episode(log, cfg)
    assert res.outcome == ep.Outcome.crash_vehicle
    assert res.steps_survived > 0


def test_crash_check():
    log = ep.make_stress_scenario(ep.StressConfig())
    scene = ep.scene_at(log, 0, ep.make_lanes(3))
    assert ep.crash_check(scene) == ep.CrashKind.none
    scene.ego.x = scene.others[0].state.x
    assert ep.crash_check(scene) == ep.CrashKind.vehicle


def test_policy_act_and_variance():
    log = ep.make_traffic_scenario(11, 0.3, 3, 0.3)
    probes = [ep.scene_at(log, 0, ep.make_lanes(3))]
    zero = ep.PolicyParams()
    a = ep.act(zero, probes[0], probes[0].ego)
    assert a.accel == 0.0 and a.turn == 0.0

    p2 = ep.PolicyParams()
    bias = list(p2.bias)
    bias[0] = 0.5
    p2.bias = bias
    accel_std, turn_std, avg = ep.seed_variance([zero, p2], probes * 10)
    assert accel_std > 0.0
    assert turn_std == 0.0


def main():
    tests = [(name, fn) for name, fn in sorted(globals().items())
             if name.startswith("test_") and callable(fn)]
    for name, fn in tests:
        fn()
        print(f"[PASS] {name}")
    print(f"smoke: {len(tests)} tests passed")


if __name__ == "__main__":
    main()
