#include "egoplan/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "egoplan/rng.hpp"

namespace egoplan {

Action ActionBounds::clamp(const Action& a) const {
  return {std::clamp(a.accel, accel_min, accel_max),
          std::clamp(a.turn, turn_min, turn_max)};
}

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("planner: horizon must be >= 1");
  if (iterations < 1) {
    throw std::invalid_argument("planner: iterations must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("planner: learning_rate must be positive");
  }
  if (!(discount > 0.0) || discount > 1.0) {
    throw std::invalid_argument("planner: discount must be in (0, 1]");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("planner: dt must be positive");
  if (bounds.accel_min >= bounds.accel_max ||
      bounds.turn_min >= bounds.turn_max) {
    throw std::invalid_argument("planner: empty action bounds");
  }
}

namespace {

double grad_norm(std::span<const Action> g) {
  double acc = 0.0;
  for (const Action& a : g) acc += a.accel * a.accel + a.turn * a.turn;
  return std::sqrt(acc);
}

struct MpcWork {
  std::vector<SelfState> world;
  std::vector<SelfState> rel;
  TrajectoryCost tc;
};

// Shared optimizer loop. The environment prediction step is supplied by
// the caller: the decoupled variant predicts once up front, the coupled
// variant re-predicts from the current rollout inside every iteration.
template <typename PredictFn>
Plan run_mpc(const Scene& scene0, const SelfState& self0,
             const PlannerConfig& cfg, bool coupled, PredictFn predict) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const SelfState anchor = self0;
  const VehicleDims dims = scene0.ego_dims;
  const int T = cfg.horizon;
  const int N = cfg.iterations;

  EnvStats stats;
  std::vector<Action> actions(static_cast<std::size_t>(T));  // zero-init
  EnvPrediction pred;

  Plan plan;
  plan.j_trace.reserve(N + 1);
  plan.grad_norms.reserve(N);

  MpcWork work;
  for (int i = 0; i < N; ++i) {
    work.world = rollout(self0, actions, {cfg.dt});
    if (coupled || i == 0) pred = predict(work.world, &stats);

    work.rel.clear();
    work.rel.reserve(work.world.size());
    for (const SelfState& st : work.world) {
      work.rel.push_back(to_frame(anchor, st));
    }
    work.tc = trajectory_cost(pred.frames, work.rel, actions, dims, cfg.weights,
                              cfg.mask, {cfg.discount, T});
    plan.j_trace.push_back(work.tc.J);

    // Backward: cost -> (rel states, actions); rel -> world; world ->
    // actions through the kinematics. In the coupled variant the cars'
    // raster fills are piecewise constant in the car states, so the
    // environment path carries zero cotangents; it is still mapped back
    // through the environment VJP onto the predicted ego states.
    TrajectoryCostGrad cg =
        trajectory_cost_vjp(pred.frames, work.rel, actions, dims, cfg.weights,
                            cfg.mask, {cfg.discount, T}, 1.0);
    std::vector<SelfStateAdjoint> world_cots(work.world.size());
    for (std::size_t k = 0; k < work.world.size(); ++k) {
      world_cots[k] = to_frame_vjp(anchor, cg.d_selves[k]);
    }
    if (coupled && !scene0.others.empty()) {
      std::vector<std::vector<CarCotangent>> car_cots(
          static_cast<std::size_t>(T),
          std::vector<CarCotangent>(scene0.others.size()));
      std::vector<SelfStateAdjoint> env_cots = predict_coupled_vjp(
          scene0, work.world, cfg.reactive, cfg.dt, car_cots);
      for (std::size_t k = 0; k < world_cots.size(); ++k) {
        world_cots[k] += env_cots[k];
      }
    }
    auto [g0, g_actions] = rollout_vjp(self0, actions, {cfg.dt}, world_cots);
    (void)g0;
    for (std::size_t k = 0; k < g_actions.size(); ++k) {
      g_actions[k].accel += cg.d_actions[k].accel;
      g_actions[k].turn += cg.d_actions[k].turn;
    }

    const double gn = grad_norm(g_actions);
    plan.grad_norms.push_back(gn);
    if (!std::isfinite(work.tc.J) || !std::isfinite(gn)) {
      throw std::runtime_error(
          "planner: non-finite objective or gradient at iteration " +
          std::to_string(i) + " (J=" + std::to_string(work.tc.J) +
          ", |g|=" + std::to_string(gn) + ")");
    }

    for (std::size_t k = 0; k < actions.size(); ++k) {
      actions[k].accel -= cfg.learning_rate * g_actions[k].accel;
      actions[k].turn -= cfg.learning_rate * g_actions[k].turn;
      actions[k] = cfg.bounds.clamp(actions[k]);
    }
  }

  // Final evaluation of the optimized actions against the last computed
  // environment prediction (for the decoupled planner that prediction is
  // exact; the coupled one would need another env roll to refresh it).
  work.world = rollout(self0, actions, {cfg.dt});
  work.rel.clear();
  for (const SelfState& st : work.world) {
    work.rel.push_back(to_frame(anchor, st));
  }
  work.tc = trajectory_cost(pred.frames, work.rel, actions, dims, cfg.weights,
                            cfg.mask, {cfg.discount, T});
  plan.j_trace.push_back(work.tc.J);

  plan.actions = std::move(actions);
  plan.pred_states = std::move(work.world);
  plan.frames = std::move(pred.frames);
  plan.final_costs = std::move(work.tc.steps);
  plan.env_advances = stats.scene_advances;
  plan.wall_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t_start)
                     .count();
  return plan;
}

}  // namespace

Plan plan_decoupled(const Scene& scene0, const SelfState& self0,
                    const PlannerConfig& cfg, const TrajectoryLog* replay) {
  if (cfg.predictor == PredictorKind::coupled_reactive) {
    throw std::invalid_argument(
        "plan_decoupled: predictor must be a decoupled kind");
  }
  if (cfg.predictor == PredictorKind::replay && replay == nullptr) {
    throw std::invalid_argument(
        "plan_decoupled: replay predictor needs an attached log");
  }
  const TrajectoryLog* log =
      cfg.predictor == PredictorKind::replay ? replay : nullptr;
  return run_mpc(scene0, self0, cfg, /*coupled=*/false,
                 [&](const std::vector<SelfState>&, EnvStats* stats) {
                   return predict_decoupled(scene0, cfg.horizon, cfg.dt,
                                            cfg.raster, stats, log);
                 });
}

Plan plan_coupled(const Scene& scene0, const SelfState& self0,
                  const PlannerConfig& cfg) {
  if (cfg.predictor != PredictorKind::coupled_reactive) {
    throw std::invalid_argument(
        "plan_coupled: predictor must be coupled_reactive");
  }
  return run_mpc(scene0, self0, cfg, /*coupled=*/true,
                 [&](const std::vector<SelfState>& world, EnvStats* stats) {
                   return predict_coupled(scene0, world, cfg.reactive, cfg.dt,
                                          cfg.raster, stats);
                 });
}

PolicyFeatures extract_features(const Scene& scene, const SelfState& self,
                                double gap_limit) {
  PolicyFeatures f;
  f.v[0] = self.s;
  const int ego_lane = scene.lanes.lane_of(self.y);
  f.v[1] = self.y - scene.lanes.lane_center(ego_lane);

  const int lane_idx[3] = {ego_lane, ego_lane - 1, ego_lane + 1};
  for (int slot = 0; slot < 3; ++slot) {
    const int lane = lane_idx[slot];
    const int base = 2 + slot * 4;
    double lead_gap = gap_limit, lead_rel = 0.0;
    double rear_gap = gap_limit, rear_rel = 0.0;
    if (lane >= 0 && lane < scene.lanes.lane_count) {
      for (const OtherVehicle& car : scene.others) {
        if (scene.lanes.lane_of(car.state.y) != lane) continue;
        if (car.state.x >= self.x) {
          const double gap = car.state.x - self.x;
          if (gap < lead_gap) {
            lead_gap = gap;
            lead_rel = car.state.s - self.s;
          }
        } else {
          const double gap = self.x - car.state.x;
          if (gap < rear_gap) {
            rear_gap = gap;
            rear_rel = car.state.s - self.s;
          }
        }
      }
    }
    f.v[base + 0] = lead_gap;
    f.v[base + 1] = lead_rel;
    f.v[base + 2] = rear_gap;
    f.v[base + 3] = rear_rel;
  }
  return f;
}

namespace {

Action affine(const PolicyParams& p, const PolicyFeatures& f) {
  Action a{p.bias[0], p.bias[1]};
  for (int i = 0; i < kPolicyFeatureCount; ++i) {
    a.accel += p.weights[i] * f.v[i];
    a.turn += p.weights[kPolicyFeatureCount + i] * f.v[i];
  }
  return a;
}

}  // namespace

Action act(const PolicyParams& policy, const Scene& scene,
           const SelfState& self, const ActionBounds& bounds) {
  return bounds.clamp(affine(policy, extract_features(scene, self)));
}

double policy_objective(const Scene& scene, const PolicyParams& params,
                        const TrainConfig& cfg, PolicyGrad* grad) {
  const int T = cfg.horizon;
  if (T < 1) throw std::invalid_argument("train: horizon must be >= 1");
  const SelfState anchor = scene.ego;
  const VehicleDims dims = scene.ego_dims;

  EnvPrediction pred =
      predict_decoupled(scene, T, cfg.dt, cfg.raster, nullptr, nullptr);

  struct StepRecord {
    PolicyFeatures feats;
    Action raw;
    bool lead_live[3] = {false, false, false};
    bool rear_live[3] = {false, false, false};
  };
  std::vector<StepRecord> recs(static_cast<std::size_t>(T));
  std::vector<Action> actions(static_cast<std::size_t>(T));
  std::vector<SelfState> world(static_cast<std::size_t>(T));
  std::vector<SelfState> rel(static_cast<std::size_t>(T));

  const double gap_limit = 100.0;
  SelfState self_prev = scene.ego;
  const Scene* scene_prev = &scene;
  for (int k = 0; k < T; ++k) {
    StepRecord& rec = recs[k];
    rec.feats = extract_features(*scene_prev, self_prev, gap_limit);
    for (int slot = 0; slot < 3; ++slot) {
      rec.lead_live[slot] = rec.feats.v[2 + slot * 4 + 0] < gap_limit;
      rec.rear_live[slot] = rec.feats.v[2 + slot * 4 + 2] < gap_limit;
    }
    rec.raw = affine(params, rec.feats);
    actions[k] = cfg.bounds.clamp(rec.raw);
    world[k] = step(self_prev, actions[k], {cfg.dt});
    rel[k] = to_frame(anchor, world[k]);
    self_prev = world[k];
    scene_prev = &pred.scenes[k];
  }

  const TrajectoryCost tc =
      trajectory_cost(pred.frames, rel, actions, dims, cfg.weights, cfg.mask,
                      {cfg.discount, T});
  if (grad == nullptr) return tc.J;

  *grad = PolicyGrad{};
  TrajectoryCostGrad cg =
      trajectory_cost_vjp(pred.frames, rel, actions, dims, cfg.weights,
                          cfg.mask, {cfg.discount, T}, 1.0);

  SelfStateAdjoint g_state;  // cotangent of world[k] while sweeping back
  for (int k = T - 1; k >= 0; --k) {
    g_state += to_frame_vjp(anchor, cg.d_selves[k]);
    const SelfState& input = k == 0 ? scene.ego : world[k - 1];
    auto [g_prev, g_a] = step_vjp(input, actions[k], {cfg.dt}, g_state);

    g_a.accel += cg.d_actions[k].accel;
    g_a.turn += cg.d_actions[k].turn;
    // Clamp gate: zero outside the open interval.
    const StepRecord& rec = recs[k];
    if (!(rec.raw.accel > cfg.bounds.accel_min &&
          rec.raw.accel < cfg.bounds.accel_max)) {
      g_a.accel = 0.0;
    }
    if (!(rec.raw.turn > cfg.bounds.turn_min &&
          rec.raw.turn < cfg.bounds.turn_max)) {
      g_a.turn = 0.0;
    }

    for (int i = 0; i < kPolicyFeatureCount; ++i) {
      grad->weights[i] += g_a.accel * rec.feats.v[i];
      grad->weights[kPolicyFeatureCount + i] += g_a.turn * rec.feats.v[i];
    }
    grad->bias[0] += g_a.accel;
    grad->bias[1] += g_a.turn;

    // Feature path back into the previous ego state.
    std::array<double, kPolicyFeatureCount> g_feat{};
    for (int i = 0; i < kPolicyFeatureCount; ++i) {
      g_feat[i] = g_a.accel * params.weights[i] +
                  g_a.turn * params.weights[kPolicyFeatureCount + i];
    }
    g_prev.s += g_feat[0];
    g_prev.y += g_feat[1];
    for (int slot = 0; slot < 3; ++slot) {
      const int base = 2 + slot * 4;
      if (rec.lead_live[slot]) {
        g_prev.x -= g_feat[base + 0];  // gap = car.x - ego.x
        g_prev.s -= g_feat[base + 1];  // rel = car.s - ego.s
      }
      if (rec.rear_live[slot]) {
        g_prev.x += g_feat[base + 2];  // gap = ego.x - car.x
        g_prev.s -= g_feat[base + 3];
      }
    }
    g_state = g_prev;
  }
  return tc.J;
}

TrainResult train_policy(std::span<const Scene> scenes,
                         const PolicyParams& init, const TrainConfig& cfg,
                         int epochs, std::uint64_t seed) {
  if (scenes.empty()) {
    throw std::invalid_argument("train_policy: empty training set");
  }
  if (epochs < 1) throw std::invalid_argument("train_policy: epochs >= 1");
  if (!(cfg.learning_rate >= 0.0)) {
    throw std::invalid_argument("train_policy: learning_rate must be >= 0");
  }

  TrainResult out;
  out.params = init;
  out.loss_curve.reserve(epochs);
  Rng rng(seed);

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      PolicyGrad g;
      const double J = policy_objective(scenes[idx], out.params, cfg, &g);
      if (!std::isfinite(J) || J > cfg.divergence_limit) {
        throw std::runtime_error("train_policy: diverged (J=" +
                                 std::to_string(J) + ")");
      }
      loss_sum += J;
      for (std::size_t w = 0; w < out.params.weights.size(); ++w) {
        out.params.weights[w] -= cfg.learning_rate * g.weights[w];
      }
      out.params.bias[0] -= cfg.learning_rate * g.bias[0];
      out.params.bias[1] -= cfg.learning_rate * g.bias[1];
    }
    out.loss_curve.push_back(loss_sum / static_cast<double>(scenes.size()));
  }
  return out;
}

}  // namespace egoplan
