#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "egoplan/sim.hpp"

namespace egoplan {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioSection {
  std::string kind = "stress";  // stress | traffic
  StressConfig stress;
  double density = 0.3;
  double duration = 30.0;
};

struct EpisodeSection {
  std::string mode = "replay";           // replay | interactive
  std::string controller = "mpc_decoupled";
  // zero_action | mpc_decoupled | mpc_coupled | policy
  std::string policy_file;
  int max_steps = 300;
  int episodes = 5;
  int n_seeds = 2;
};

struct TrainSection {
  int epochs = 4;
  double learning_rate = 2e-4;
  int scene_count = 12;
  int horizon = 20;
};

struct VarianceSection {
  int probe_count = 1000;
  int n_seeds = 3;
  double clamp = 3.0;
};

struct BenchSection {
  int steps = 20;
  int warmup = 3;
  std::vector<std::string> methods = {"policy", "mpc_decoupled",
                                      "mpc_coupled"};
};

struct GradcheckSection {
  int samples = 100;
};

/// Every tunable of the toolkit with its default. Parsing is strict:
/// unknown keys and type mismatches fail with the offending field path.
struct RunConfig {
  std::uint64_t seed = 0;
  double dt = 0.1;
  LaneGeometry lanes = make_lanes(3, 3.7);
  RasterGeometry raster;
  MaskConfig mask;
  CostWeights weights;
  PlannerConfig planner;
  ReactiveParams reactive;
  ScenarioSection scenario;
  EpisodeSection episode;
  TrainSection train;
  VarianceSection variance;
  BenchSection bench;
  GradcheckSection gradcheck;

  /// Cross-field consistency (dt propagation, lane geometry, enums).
  void finalize();
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text, const std::string& name);
std::string config_to_json(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

PredictorKind predictor_from_string(const std::string& s);
const char* predictor_name(PredictorKind k);
ControllerKind controller_from_string(const std::string& s);

/// Builds the episode harness settings implied by a run config.
EpisodeConfig episode_config(const RunConfig& cfg);

PolicyParams load_policy(const std::string& path);
void save_policy(const PolicyParams& params, const std::string& path);

}  // namespace egoplan
