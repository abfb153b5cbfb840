#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "egoplan/config.hpp"
#include "egoplan/gradcheck.hpp"
#include "egoplan/sim.hpp"

namespace py = pybind11;
using namespace egoplan;

namespace {

py::array_t<double> grid_to_numpy(const Grid& g) {
  py::array_t<double> arr({g.rows, g.cols});
  std::copy(g.data.begin(), g.data.end(), arr.mutable_data());
  return arr;
}

}  // namespace

PYBIND11_MODULE(egoplan, m) {
  m.doc() = "Highway-driving planning toolkit: exact ego kinematics, "
            "pluggable environment predictors, gradient MPC, micro-simulation";

  py::class_<SelfState>(m, "SelfState")
      .def(py::init<>())
      .def(py::init<double, double, double, double, double>(), py::arg("x"),
           py::arg("y"), py::arg("ux"), py::arg("uy"), py::arg("s"))
      .def_readwrite("x", &SelfState::x)
      .def_readwrite("y", &SelfState::y)
      .def_readwrite("ux", &SelfState::ux)
      .def_readwrite("uy", &SelfState::uy)
      .def_readwrite("s", &SelfState::s)
      .def("__repr__", [](const SelfState& st) {
        return "SelfState(x=" + std::to_string(st.x) + ", y=" +
               std::to_string(st.y) + ", ux=" + std::to_string(st.ux) +
               ", uy=" + std::to_string(st.uy) + ", s=" + std::to_string(st.s) +
               ")";
      });

  py::class_<Action>(m, "Action")
      .def(py::init<>())
      .def(py::init<double, double>(), py::arg("accel"), py::arg("turn"))
      .def_readwrite("accel", &Action::accel)
      .def_readwrite("turn", &Action::turn);

  py::class_<SelfStateAdjoint>(m, "SelfStateAdjoint")
      .def(py::init<>())
      .def_readwrite("x", &SelfStateAdjoint::x)
      .def_readwrite("y", &SelfStateAdjoint::y)
      .def_readwrite("ux", &SelfStateAdjoint::ux)
      .def_readwrite("uy", &SelfStateAdjoint::uy)
      .def_readwrite("s", &SelfStateAdjoint::s);

  py::class_<StepParams>(m, "StepParams")
      .def(py::init<>())
      .def(py::init<double>(), py::arg("dt"))
      .def_readwrite("dt", &StepParams::dt);

  m.def("step", &step, py::arg("state"), py::arg("action"),
        py::arg("params") = StepParams{});
  m.def(
      "rollout",
      [](const SelfState& s0, const std::vector<Action>& actions,
         const StepParams& p) { return rollout(s0, actions, p); },
      py::arg("state0"), py::arg("actions"), py::arg("params") = StepParams{});
  m.def(
      "step_vjp",
      [](const SelfState& st, const Action& a, const StepParams& p,
         const SelfStateAdjoint& cot) { return step_vjp(st, a, p, cot); },
      py::arg("state"), py::arg("action"), py::arg("params"),
      py::arg("cotangent"));
  m.def(
      "rollout_vjp",
      [](const SelfState& s0, const std::vector<Action>& actions,
         const StepParams& p, const std::vector<SelfStateAdjoint>& cots) {
        return rollout_vjp(s0, actions, p, cots);
      },
      py::arg("state0"), py::arg("actions"), py::arg("params"),
      py::arg("cotangents"));
  m.def("to_frame", &to_frame, py::arg("anchor"), py::arg("state"));

  py::class_<VehicleDims>(m, "VehicleDims")
      .def(py::init<>())
      .def(py::init<double, double>(), py::arg("width"), py::arg("length"))
      .def_readwrite("width", &VehicleDims::width)
      .def_readwrite("length", &VehicleDims::length);

  py::class_<LaneGeometry>(m, "LaneGeometry")
      .def(py::init<>())
      .def_readwrite("lane_count", &LaneGeometry::lane_count)
      .def_readwrite("lane_width", &LaneGeometry::lane_width)
      .def_readwrite("road_y_min", &LaneGeometry::road_y_min)
      .def_readwrite("road_y_max", &LaneGeometry::road_y_max)
      .def("lane_center", &LaneGeometry::lane_center)
      .def("lane_of", &LaneGeometry::lane_of);
  m.def("make_lanes", &make_lanes, py::arg("lane_count"),
        py::arg("lane_width") = 3.7);

  py::class_<OtherVehicle>(m, "OtherVehicle")
      .def(py::init<>())
      .def_readwrite("id", &OtherVehicle::id)
      .def_readwrite("state", &OtherVehicle::state)
      .def_readwrite("dims", &OtherVehicle::dims);

  py::class_<Scene>(m, "Scene")
      .def(py::init<>())
      .def_readwrite("t", &Scene::t)
      .def_readwrite("ego", &Scene::ego)
      .def_readwrite("ego_dims", &Scene::ego_dims)
      .def_readwrite("others", &Scene::others)
      .def_readwrite("lanes", &Scene::lanes);

  py::class_<VehicleTrack>(m, "VehicleTrack")
      .def(py::init<>())
      .def_readwrite("id", &VehicleTrack::id)
      .def_readwrite("dims", &VehicleTrack::dims)
      .def_readwrite("t0", &VehicleTrack::t0)
      .def_readwrite("states", &VehicleTrack::states);

  py::class_<TrajectoryLog>(m, "TrajectoryLog")
      .def(py::init<>())
      .def_readwrite("dt", &TrajectoryLog::dt)
      .def_readwrite("tracks", &TrajectoryLog::tracks)
      .def_readwrite("normalized_on_load", &TrajectoryLog::normalized_on_load)
      .def("last_frame", &TrajectoryLog::last_frame);

  py::class_<StressConfig>(m, "StressConfig")
      .def(py::init<>())
      .def_readwrite("lead_gap", &StressConfig::lead_gap)
      .def_readwrite("lead_decel", &StressConfig::lead_decel)
      .def_readwrite("rear_gap", &StressConfig::rear_gap)
      .def_readwrite("initial_speed", &StressConfig::initial_speed)
      .def_readwrite("brake_onset", &StressConfig::brake_onset)
      .def_readwrite("lateral_offset", &StressConfig::lateral_offset)
      .def_readwrite("duration", &StressConfig::duration)
      .def_readwrite("dt", &StressConfig::dt);

  m.def("make_stress_scenario", &make_stress_scenario, py::arg("config"));
  m.def("make_traffic_scenario", &make_traffic_scenario, py::arg("seed"),
        py::arg("density"), py::arg("lane_count"), py::arg("duration"));
  m.def("save_log",
        [](const TrajectoryLog& log, const std::string& path) {
          save_log(log, path);
        },
        py::arg("log"), py::arg("path"));
  m.def("load_log", [](const std::string& path) { return load_log(path); },
        py::arg("path"));
  m.def(
      "scene_at",
      [](const TrajectoryLog& log, int t, const LaneGeometry& lanes) {
        return scene_at(log, t, lanes);
      },
      py::arg("log"), py::arg("t"), py::arg("lanes"));

  py::class_<RasterGeometry>(m, "RasterGeometry")
      .def(py::init<>())
      .def_readwrite("height_cells", &RasterGeometry::height_cells)
      .def_readwrite("width_cells", &RasterGeometry::width_cells)
      .def_readwrite("height_m", &RasterGeometry::height_m)
      .def_readwrite("width_m", &RasterGeometry::width_m)
      .def("cell_h", &RasterGeometry::cell_h)
      .def("cell_w", &RasterGeometry::cell_w);

  py::class_<RasterFrame>(m, "RasterFrame")
      .def(py::init<>())
      .def_readwrite("anchor", &RasterFrame::anchor)
      .def_property_readonly(
          "lanes", [](const RasterFrame& f) { return grid_to_numpy(f.lanes); })
      .def_property_readonly(
          "cars", [](const RasterFrame& f) { return grid_to_numpy(f.cars); })
      .def_property_readonly("offroad", [](const RasterFrame& f) {
        return grid_to_numpy(f.offroad);
      });

  py::class_<MaskConfig>(m, "MaskConfig")
      .def(py::init<>())
      .def_readwrite("exponent", &MaskConfig::exponent)
      .def_readwrite("lane_pad", &MaskConfig::lane_pad)
      .def_readwrite("speed_floor", &MaskConfig::speed_floor);

  m.def("rasterize", &rasterize, py::arg("scene"),
        py::arg("geom") = RasterGeometry{});
  m.def(
      "mesh_grid",
      [](const RasterGeometry& geom) {
        py::array_t<double> arr({geom.height_cells, geom.width_cells, 2});
        auto view = arr.mutable_unchecked<3>();
        for (int i = 0; i < geom.height_cells; ++i) {
          for (int j = 0; j < geom.width_cells; ++j) {
            const Vec2 a = mesh_coord(geom, i, j);
            view(i, j, 0) = a.x;
            view(i, j, 1) = a.y;
          }
        }
        return arr;
      },
      py::arg("geom") = RasterGeometry{});
  m.def(
      "build_masks",
      [](const SelfState& rel, const VehicleDims& dims, const MaskConfig& cfg,
         const RasterGeometry& geom) {
        const MaskPair masks = build_masks(rel, dims, cfg, geom);
        return py::make_tuple(grid_to_numpy(masks.car), grid_to_numpy(masks.side));
      },
      py::arg("rel_state"), py::arg("dims"), py::arg("config") = MaskConfig{},
      py::arg("geom") = RasterGeometry{});
  m.def("mask_reach_x", &mask_reach_x, py::arg("rel_state"), py::arg("dims"),
        py::arg("config") = MaskConfig{});
  m.def("write_ppm",
        [](const RasterFrame& f, const std::string& path) { write_ppm(f, path); },
        py::arg("frame"), py::arg("path"));

  py::class_<CostWeights>(m, "CostWeights")
      .def(py::init<>())
      .def_readwrite("proximity", &CostWeights::proximity)
      .def_readwrite("lane", &CostWeights::lane)
      .def_readwrite("offroad", &CostWeights::offroad)
      .def_readwrite("jerk", &CostWeights::jerk)
      .def_readwrite("destination", &CostWeights::destination);

  py::class_<StepCost>(m, "StepCost")
      .def_readonly("proximity", &StepCost::proximity)
      .def_readonly("lane", &StepCost::lane)
      .def_readonly("offroad", &StepCost::offroad)
      .def_readonly("jerk", &StepCost::jerk)
      .def_readonly("destination", &StepCost::destination)
      .def_readonly("total", &StepCost::total);

  m.def("step_cost", &step_cost, py::arg("frame"), py::arg("rel_state"),
        py::arg("dims"), py::arg("weights") = CostWeights{},
        py::arg("mask_config") = MaskConfig{});
  m.def(
      "jerk_cost",
      [](const std::vector<Action>& actions) { return jerk_cost(actions); },
      py::arg("actions"));

  py::enum_<PredictorKind>(m, "PredictorKind")
      .value("replay", PredictorKind::replay)
      .value("constant_velocity", PredictorKind::constant_velocity)
      .value("coupled_reactive", PredictorKind::coupled_reactive);

  py::class_<ReactiveParams>(m, "ReactiveParams")
      .def(py::init<>())
      .def_readwrite("gain", &ReactiveParams::gain)
      .def_readwrite("scale", &ReactiveParams::scale)
      .def_readwrite("brake_cap", &ReactiveParams::brake_cap);

  py::class_<EnvPrediction>(m, "EnvPrediction")
      .def_readonly("scenes", &EnvPrediction::scenes)
      .def_readonly("frames", &EnvPrediction::frames);

  m.def(
      "predict_decoupled",
      [](const Scene& scene0, int horizon, double dt,
         const RasterGeometry& geom) {
        return predict_decoupled(scene0, horizon, dt, geom);
      },
      py::arg("scene0"), py::arg("horizon"), py::arg("dt") = 0.1,
      py::arg("geom") = RasterGeometry{});
  m.def(
      "predict_coupled",
      [](const Scene& scene0, const std::vector<SelfState>& pred_self,
         const ReactiveParams& params, double dt, const RasterGeometry& geom) {
        return predict_coupled(scene0, pred_self, params, dt, geom);
      },
      py::arg("scene0"), py::arg("pred_self"),
      py::arg("params") = ReactiveParams{}, py::arg("dt") = 0.1,
      py::arg("geom") = RasterGeometry{});

  py::class_<ActionBounds>(m, "ActionBounds")
      .def(py::init<>())
      .def_readwrite("accel_min", &ActionBounds::accel_min)
      .def_readwrite("accel_max", &ActionBounds::accel_max)
      .def_readwrite("turn_min", &ActionBounds::turn_min)
      .def_readwrite("turn_max", &ActionBounds::turn_max);

  py::class_<PlannerConfig>(m, "PlannerConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &PlannerConfig::horizon)
      .def_readwrite("iterations", &PlannerConfig::iterations)
      .def_readwrite("learning_rate", &PlannerConfig::learning_rate)
      .def_readwrite("discount", &PlannerConfig::discount)
      .def_readwrite("dt", &PlannerConfig::dt)
      .def_readwrite("predictor", &PlannerConfig::predictor)
      .def_readwrite("weights", &PlannerConfig::weights)
      .def_readwrite("mask", &PlannerConfig::mask)
      .def_readwrite("raster", &PlannerConfig::raster)
      .def_readwrite("reactive", &PlannerConfig::reactive)
      .def_readwrite("bounds", &PlannerConfig::bounds);

  py::class_<Plan>(m, "Plan")
      .def_readonly("actions", &Plan::actions)
      .def_readonly("pred_states", &Plan::pred_states)
      .def_readonly("j_trace", &Plan::j_trace)
      .def_readonly("grad_norms", &Plan::grad_norms)
      .def_readonly("wall_ms", &Plan::wall_ms)
      .def_readonly("env_advances", &Plan::env_advances);

  m.def(
      "plan_decoupled",
      [](const Scene& scene0, const SelfState& self0, const PlannerConfig& cfg,
         const TrajectoryLog* replay) {
        return plan_decoupled(scene0, self0, cfg, replay);
      },
      py::arg("scene0"), py::arg("self0"), py::arg("config"),
      py::arg("replay") = nullptr);
  m.def("plan_coupled", &plan_coupled, py::arg("scene0"), py::arg("self0"),
        py::arg("config"));

  py::class_<PolicyParams>(m, "PolicyParams")
      .def(py::init<>())
      .def_readwrite("weights", &PolicyParams::weights)
      .def_readwrite("bias", &PolicyParams::bias);

  m.def("act", &act, py::arg("policy"), py::arg("scene"), py::arg("state"),
        py::arg("bounds") = ActionBounds{});
  m.def(
      "extract_features",
      [](const Scene& scene, const SelfState& self) {
        return extract_features(scene, self).v;
      },
      py::arg("scene"), py::arg("state"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &TrainConfig::horizon)
      .def_readwrite("dt", &TrainConfig::dt)
      .def_readwrite("discount", &TrainConfig::discount)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("weights", &TrainConfig::weights)
      .def_readwrite("mask", &TrainConfig::mask)
      .def_readwrite("raster", &TrainConfig::raster)
      .def_readwrite("bounds", &TrainConfig::bounds)
      .def_readwrite("divergence_limit", &TrainConfig::divergence_limit);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("params", &TrainResult::params)
      .def_readonly("loss_curve", &TrainResult::loss_curve);

  m.def(
      "train_policy",
      [](const std::vector<Scene>& scenes, const PolicyParams& init,
         const TrainConfig& cfg, int epochs, std::uint64_t seed) {
        return train_policy(scenes, init, cfg, epochs, seed);
      },
      py::arg("scenes"), py::arg("init"), py::arg("config"), py::arg("epochs"),
      py::arg("seed"));

  py::enum_<SimMode>(m, "SimMode")
      .value("replay", SimMode::replay)
      .value("interactive", SimMode::interactive);
  py::enum_<ControllerKind>(m, "ControllerKind")
      .value("zero_action", ControllerKind::zero_action)
      .value("mpc_decoupled", ControllerKind::mpc_decoupled)
      .value("mpc_coupled", ControllerKind::mpc_coupled)
      .value("policy", ControllerKind::policy);
  py::enum_<Outcome>(m, "Outcome")
      .value("completed", Outcome::completed)
      .value("crash_vehicle", Outcome::crash_vehicle)
      .value("crash_offroad", Outcome::crash_offroad)
      .value("timeout", Outcome::timeout);
  py::enum_<CrashKind>(m, "CrashKind")
      .value("none", CrashKind::none)
      .value("vehicle", CrashKind::vehicle)
      .value("offroad", CrashKind::offroad);

  py::class_<EpisodeConfig>(m, "EpisodeConfig")
      .def(py::init<>())
      .def_readwrite("mode", &EpisodeConfig::mode)
      .def_readwrite("controller", &EpisodeConfig::controller)
      .def_readwrite("policy", &EpisodeConfig::policy)
      .def_readwrite("max_steps", &EpisodeConfig::max_steps)
      .def_readwrite("lanes", &EpisodeConfig::lanes)
      .def_readwrite("planner", &EpisodeConfig::planner)
      .def_readwrite("keeper", &EpisodeConfig::keeper);

  py::class_<EpisodeResult>(m, "EpisodeResult")
      .def_readonly("outcome", &EpisodeResult::outcome)
      .def_readonly("steps_survived", &EpisodeResult::steps_survived)
      .def_readonly("step_costs", &EpisodeResult::step_costs)
      .def_readonly("ego_actions", &EpisodeResult::ego_actions)
      .def_readonly("trace", &EpisodeResult::trace);

  m.def("run_episode", &run_episode, py::arg("log"), py::arg("config"));
  m.def("crash_check", &crash_check, py::arg("scene"));
  m.def(
      "seed_variance",
      [](const std::vector<PolicyParams>& policies,
         const std::vector<Scene>& probes, const ActionBounds& bounds,
         double clamp) {
        const SeedVarianceReport rep =
            seed_variance(policies, probes, bounds, clamp);
        return py::make_tuple(rep.per_dim[0], rep.per_dim[1], rep.average);
      },
      py::arg("policies"), py::arg("probes"), py::arg("bounds") = ActionBounds{},
      py::arg("clamp") = 3.0);
}
