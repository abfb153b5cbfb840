#include "egoplan/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace egoplan {

void EpisodeConfig::validate() const {
  if (max_steps < 1) {
    throw std::invalid_argument("episode: max_steps must be >= 1");
  }
  lanes.validate();
  if (controller == ControllerKind::mpc_decoupled ||
      controller == ControllerKind::mpc_coupled) {
    planner.validate();
  }
  if (mode == SimMode::interactive &&
      planner.predictor == PredictorKind::replay) {
    throw std::invalid_argument(
        "episode: the replay predictor needs replay mode");
  }
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::completed: return "completed";
    case Outcome::crash_vehicle: return "crash_vehicle";
    case Outcome::crash_offroad: return "crash_offroad";
    case Outcome::timeout: return "timeout";
  }
  return "unknown";
}

CrashKind crash_check(const Scene& scene) {
  const OrientedRect ego = vehicle_rect(scene.ego, scene.ego_dims);
  for (const OtherVehicle& car : scene.others) {
    if (rects_intersect(ego, vehicle_rect(car.state, car.dims))) {
      return CrashKind::vehicle;
    }
  }
  for (const Vec2& corner : ego.corners()) {
    if (corner.y < scene.lanes.road_y_min ||
        corner.y > scene.lanes.road_y_max) {
      return CrashKind::offroad;
    }
  }
  return CrashKind::none;
}

namespace {

struct KeeperCar {
  int id = 0;
  SelfState state;
  VehicleDims dims;
  double target_speed = 0.0;
};

// Smooth car-following plus a spring-damper lane keeper. Same functional
// family as the coupled predictor's braking term.
Action keeper_action(const KeeperCar& self, const SelfState& ego,
                     std::span<const KeeperCar> cars,
                     const LaneGeometry& lanes, const ReactiveParams& p) {
  const int lane = lanes.lane_of(self.state.y);

  double lead_gap = 1e9;
  double lead_speed = 0.0;
  auto consider = [&](const SelfState& other, double y) {
    if (lanes.lane_of(y) != lane) return;
    if (other.x <= self.state.x) return;
    const double gap = other.x - self.state.x;
    if (gap < lead_gap) {
      lead_gap = gap;
      lead_speed = other.s;
    }
  };
  for (const KeeperCar& c : cars) {
    if (c.id != self.id) consider(c.state, c.state.y);
  }
  consider(ego, ego.y);

  Action a;
  a.accel = 0.2 * (self.target_speed - self.state.s);
  if (lead_gap < 1e8) {
    const double closing = std::max(0.0, self.state.s - lead_speed);
    const double want = 10.0 + 1.5 * self.state.s;
    const double gate = 1.0 / (1.0 + std::exp(-(want - lead_gap) / p.scale));
    a.accel -= std::min(p.gain * closing * gate, p.brake_cap);
  }
  const double center = lanes.lane_center(lane);
  const double s_eff = std::max(self.state.s, 5.0);
  a.turn = 0.3 * (self.state.y - center) / s_eff + 1.2 * self.state.uy;
  a.accel = std::clamp(a.accel, -8.0, 8.0);
  a.turn = std::clamp(a.turn, -0.5, 0.5);
  return a;
}

Action pick_action(const EpisodeConfig& cfg, const Scene& scene,
                   const SelfState& ego, const TrajectoryLog* replay_log) {
  switch (cfg.controller) {
    case ControllerKind::zero_action:
      return {};
    case ControllerKind::policy:
      return act(cfg.policy, scene, ego, cfg.planner.bounds);
    case ControllerKind::mpc_decoupled:
      return plan_decoupled(scene, ego, cfg.planner, replay_log).actions.front();
    case ControllerKind::mpc_coupled:
      return plan_coupled(scene, ego, cfg.planner).actions.front();
  }
  return {};
}

}  // namespace

EpisodeResult run_episode(const TrajectoryLog& log, const EpisodeConfig& cfg) {
  cfg.validate();
  const VehicleTrack* ego_track = log.find(0);
  if (ego_track == nullptr || ego_track->t0 != 0 || ego_track->states.empty()) {
    throw std::invalid_argument(
        "run_episode: log needs an ego track (car 0) starting at t=0");
  }

  PlannerConfig planner = cfg.planner;
  planner.dt = log.dt;
  EpisodeConfig ecfg = cfg;
  ecfg.planner = planner;

  SelfState ego = ego_track->states.front();
  const VehicleDims ego_dims = ego_track->dims;
  const double x_start = ego.x;
  const StepParams dt{log.dt};

  // Interactive mode simulates every car present at the first frame.
  std::vector<KeeperCar> keepers;
  if (cfg.mode == SimMode::interactive) {
    for (const auto& tr : log.tracks) {
      if (tr.id == 0 || tr.t0 != 0 || tr.states.empty()) continue;
      keepers.push_back({tr.id, tr.states.front(), tr.dims,
                         tr.states.front().s});
    }
  }

  auto make_scene = [&](int t) {
    if (cfg.mode == SimMode::replay) {
      return scene_at(log, t, cfg.lanes, ego, ego_dims);
    }
    Scene sc;
    sc.t = t;
    sc.ego = ego;
    sc.ego_dims = ego_dims;
    sc.lanes = cfg.lanes;
    for (const KeeperCar& c : keepers) {
      sc.others.push_back({c.id, c.state, c.dims});
    }
    return sc;
  };

  EpisodeResult res;
  res.trace.dt = log.dt;
  auto trace_record = [&](int t, const Scene& sc) {
    auto append = [&](int id, const SelfState& st, const VehicleDims& dims) {
      for (auto& tr : res.trace.tracks) {
        if (tr.id == id) {
          tr.states.push_back(st);
          return;
        }
      }
      VehicleTrack tr;
      tr.id = id;
      tr.dims = dims;
      tr.t0 = t;
      tr.states.push_back(st);
      res.trace.tracks.push_back(std::move(tr));
    };
    append(0, sc.ego, sc.ego_dims);
    for (const OtherVehicle& c : sc.others) append(c.id, c.state, c.dims);
  };

  const int last_log_frame = log.last_frame();
  Scene scene = make_scene(0);
  trace_record(0, scene);

  res.outcome = Outcome::completed;
  int t = 0;
  while (true) {
    if (cfg.mode == SimMode::replay && t + 1 > last_log_frame) {
      res.outcome = Outcome::completed;
      break;
    }
    if (t >= cfg.max_steps) {
      res.outcome = cfg.mode == SimMode::replay ? Outcome::timeout
                                                : Outcome::completed;
      break;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const Action action = pick_action(
        ecfg, scene, ego, cfg.mode == SimMode::replay ? &log : nullptr);
    if (cfg.record_wall) {
      res.step_wall_ms.push_back(std::chrono::duration<double, std::milli>(
                                     std::chrono::steady_clock::now() - t0)
                                     .count());
    }
    res.ego_actions.push_back(action);

    ego = step(ego, action, dt);
    if (cfg.mode == SimMode::interactive) {
      std::vector<KeeperCar> next = keepers;
      for (std::size_t i = 0; i < keepers.size(); ++i) {
        const Action ka =
            keeper_action(keepers[i], scene.ego, keepers, cfg.lanes, cfg.keeper);
        next[i].state = step(keepers[i].state, ka, dt);
      }
      keepers = std::move(next);
    }
    ++t;
    scene = make_scene(t);
    trace_record(t, scene);

    // Step cost at the realized state: masks centered on the ego, forward
    // progress measured from the episode start.
    {
      const RasterFrame frame = rasterize(scene, ecfg.planner.raster);
      SelfState rel;
      rel.s = ego.s;
      StepCost c = step_cost(frame, rel, ego_dims, ecfg.planner.weights,
                             ecfg.planner.mask);
      c.destination = -(ego.x - x_start);
      c.total = weighted_total(c, ecfg.planner.weights);
      res.step_costs.push_back(c);
    }

    const CrashKind crash = crash_check(scene);
    if (crash != CrashKind::none) {
      res.outcome = crash == CrashKind::vehicle ? Outcome::crash_vehicle
                                                : Outcome::crash_offroad;
      res.steps_survived = t;
      return res;
    }
  }
  res.steps_survived = t;
  return res;
}

std::vector<EpisodeResult> run_episodes(std::span<const TrajectoryLog> logs,
                                        const EpisodeConfig& cfg, int workers) {
  std::vector<EpisodeResult> results(logs.size());
  workers = std::max(1, workers);
  if (workers == 1 || logs.size() <= 1) {
    for (std::size_t i = 0; i < logs.size(); ++i) {
      results[i] = run_episode(logs[i], cfg);
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int n_threads = std::min<std::size_t>(workers, logs.size());
  std::vector<std::exception_ptr> errors(n_threads);
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next.fetch_add(1); i < logs.size();
             i = next.fetch_add(1)) {
          results[i] = run_episode(logs[i], cfg);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return results;
}

CrashStats crash_rate(const std::vector<std::vector<Outcome>>& by_seed) {
  if (by_seed.size() < 2) {
    throw std::invalid_argument("crash_rate: need at least two seeds");
  }
  CrashStats stats;
  stats.seeds = static_cast<int>(by_seed.size());
  std::vector<double> pct;
  pct.reserve(by_seed.size());
  for (const auto& outcomes : by_seed) {
    if (outcomes.empty()) {
      throw std::invalid_argument("crash_rate: a seed has no episodes");
    }
    int crashes = 0;
    for (Outcome o : outcomes) {
      if (o == Outcome::crash_vehicle || o == Outcome::crash_offroad) {
        ++crashes;
      }
    }
    stats.episodes += static_cast<int>(outcomes.size());
    pct.push_back(100.0 * crashes / static_cast<double>(outcomes.size()));
  }
  double mean = 0.0;
  for (double p : pct) mean += p;
  mean /= static_cast<double>(pct.size());
  double var = 0.0;
  for (double p : pct) var += (p - mean) * (p - mean);
  var /= static_cast<double>(pct.size() - 1);
  stats.mean_pct = mean;
  stats.std_pct = std::sqrt(var);
  return stats;
}

SeedVarianceReport seed_variance(std::span<const PolicyParams> policies,
                                 std::span<const Scene> probes,
                                 const ActionBounds& bounds,
                                 double clamp_limit) {
  if (policies.size() < 2) {
    throw std::invalid_argument("seed_variance: need at least two policies");
  }
  if (probes.empty()) {
    throw std::invalid_argument("seed_variance: empty probe set");
  }
  const std::size_t P = policies.size();
  const std::size_t E = probes.size();

  // outputs[p][e][d], clamped
  std::vector<std::vector<std::array<double, 2>>> out(
      P, std::vector<std::array<double, 2>>(E));
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t e = 0; e < E; ++e) {
      const Action a = act(policies[p], probes[e], probes[e].ego, bounds);
      out[p][e] = {std::clamp(a.accel, -clamp_limit, clamp_limit),
                   std::clamp(a.turn, -clamp_limit, clamp_limit)};
    }
  }

  SeedVarianceReport rep;
  for (int d = 0; d < 2; ++d) {
    double mu = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t e = 0; e < E; ++e) mu += out[p][e][d];
    }
    mu /= static_cast<double>(P * E);
    double var = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t e = 0; e < E; ++e) {
        const double dv = out[p][e][d] - mu;
        var += dv * dv;
      }
    }
    var /= static_cast<double>(P * E);
    const double sigma = std::sqrt(var);

    double std_sum = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
      double zmean = 0.0;
      std::vector<double> z(P);
      for (std::size_t p = 0; p < P; ++p) {
        z[p] = sigma > 0.0 ? (out[p][e][d] - mu) / sigma : 0.0;
        zmean += z[p];
      }
      // Coinciding outputs have zero spread by definition; skip before
      // the mean division can manufacture an ulp of variance.
      bool all_same = true;
      for (std::size_t p = 1; p < P; ++p) all_same = all_same && z[p] == z[0];
      if (all_same) continue;
      zmean /= static_cast<double>(P);
      double zvar = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        zvar += (z[p] - zmean) * (z[p] - zmean);
      }
      zvar /= static_cast<double>(P - 1);
      std_sum += std::sqrt(zvar);
    }
    rep.per_dim[d] = std_sum / static_cast<double>(E);
  }
  rep.average = (rep.per_dim[0] + rep.per_dim[1]) / 2.0;
  return rep;
}

std::vector<BenchRow> bench_planner(
    const TrajectoryLog& log,
    const std::vector<std::pair<std::string, EpisodeConfig>>& methods,
    int steps, int warmup) {
  if (warmup < 1) {
    throw std::invalid_argument("bench: warmup must be >= 1");
  }
  if (steps < 1) throw std::invalid_argument("bench: steps must be >= 1");

  std::vector<BenchRow> rows;
  for (const auto& [name, base_cfg] : methods) {
    EpisodeConfig cfg = base_cfg;
    cfg.max_steps = warmup + steps;
    cfg.record_wall = true;
    const EpisodeResult res = run_episode(log, cfg);
    std::vector<double> samples;
    for (std::size_t i = warmup; i < res.step_wall_ms.size(); ++i) {
      samples.push_back(res.step_wall_ms[i]);
    }
    if (samples.empty() && !res.step_wall_ms.empty()) {
      samples.push_back(res.step_wall_ms.back());
    }
    BenchRow row;
    row.name = name;
    row.steps = static_cast<int>(samples.size());
    if (!samples.empty()) {
      double mean = 0.0;
      for (double v : samples) mean += v;
      mean /= static_cast<double>(samples.size());
      double var = 0.0;
      for (double v : samples) var += (v - mean) * (v - mean);
      var /= static_cast<double>(std::max<std::size_t>(1, samples.size() - 1));
      std::vector<double> sorted = samples;
      std::sort(sorted.begin(), sorted.end());
      row.mean_ms = mean;
      row.std_ms = std::sqrt(var);
      row.median_ms = sorted[sorted.size() / 2];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) {
        out.append(width[c] - row[c].size() + 2, ' ');
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace egoplan
