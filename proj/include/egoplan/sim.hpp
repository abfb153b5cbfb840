#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "egoplan/planner.hpp"

namespace egoplan {

enum class SimMode { replay, interactive };
enum class ControllerKind { zero_action, mpc_decoupled, mpc_coupled, policy };

struct EpisodeConfig {
  SimMode mode = SimMode::replay;
  ControllerKind controller = ControllerKind::zero_action;
  PolicyParams policy;        // used when controller == policy
  int max_steps = 300;
  LaneGeometry lanes;
  PlannerConfig planner;      // MPC settings; also supplies weights/mask/
                              // raster/bounds for step-cost recording
  ReactiveParams keeper;      // interactive rule-keeper reactivity
  bool record_wall = true;

  void validate() const;
};

enum class Outcome { completed, crash_vehicle, crash_offroad, timeout };

const char* outcome_name(Outcome o);

struct EpisodeResult {
  Outcome outcome = Outcome::completed;
  int steps_survived = 0;
  std::vector<double> step_wall_ms;   // controller latency per step
  std::vector<StepCost> step_costs;   // evaluated at the realized state
  std::vector<Action> ego_actions;
  TrajectoryLog trace;                // realized states of every car
};

/// Receding-horizon episode: observe the scene, plan or act, apply the
/// first action through the kinematics, advance the other cars (log rows
/// in replay mode, rule keepers in interactive mode), crash-check, repeat.
/// The log supplies initial states; its dt drives the whole episode.
EpisodeResult run_episode(const TrajectoryLog& log, const EpisodeConfig& cfg);

/// Runs independent episodes over a worker pool; results keep input order.
std::vector<EpisodeResult> run_episodes(std::span<const TrajectoryLog> logs,
                                        const EpisodeConfig& cfg, int workers);

enum class CrashKind { none, vehicle, offroad };

/// Vehicle crash when the ego rectangle intersects any other car
/// (separating-axis test); offroad when any ego corner leaves
/// [road_y_min, road_y_max].
CrashKind crash_check(const Scene& scene);

struct CrashStats {
  double mean_pct = 0.0;
  double std_pct = 0.0;  // sample std across seeds
  int seeds = 0;
  int episodes = 0;
};

/// Per-seed crash percentage, then mean and sample standard deviation
/// across seeds. Requires at least two seeds.
CrashStats crash_rate(const std::vector<std::vector<Outcome>>& by_seed);

struct SeedVarianceReport {
  std::array<double, 2> per_dim{};  // accel, turn
  double average = 0.0;
};

/// Agreement of same-method policies trained with different seeds:
/// evaluate every policy on every probe scene, clamp outputs to
/// [-clamp_limit, clamp_limit], normalize by the joint mean/std across
/// seeds and examples, take the per-example sample std across seeds, and
/// average over examples. A zero joint std maps to zero normalized values.
SeedVarianceReport seed_variance(std::span<const PolicyParams> policies,
                                 std::span<const Scene> probes,
                                 const ActionBounds& bounds,
                                 double clamp_limit = 3.0);

struct BenchRow {
  std::string name;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double median_ms = 0.0;
  int steps = 0;
};

/// Wall time per simulation step for each named config, measured on the
/// same episode with the first `warmup` steps excluded.
std::vector<BenchRow> bench_planner(
    const TrajectoryLog& log,
    const std::vector<std::pair<std::string, EpisodeConfig>>& methods,
    int steps, int warmup);

/// Plain-text table with aligned columns (first row is the header).
std::string format_table(const std::vector<std::vector<std::string>>& rows);

}  // namespace egoplan
