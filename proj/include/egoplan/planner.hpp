#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "egoplan/cost.hpp"
#include "egoplan/envmodel.hpp"

namespace egoplan {

struct ActionBounds {
  double accel_min = -10.0;
  double accel_max = 10.0;
  double turn_min = -1.0;
  double turn_max = 1.0;

  Action clamp(const Action& a) const;
};

struct PlannerConfig {
  int horizon = 30;
  int iterations = 27;
  double learning_rate = 0.48;
  double discount = 0.99;
  double dt = 0.1;
  PredictorKind predictor = PredictorKind::constant_velocity;
  CostWeights weights;
  MaskConfig mask;
  RasterGeometry raster;
  ReactiveParams reactive;
  ActionBounds bounds;

  void validate() const;
};

/// Planner output: the optimized action sequence plus everything needed to
/// audit the optimization (per-iteration objective, gradient norms, the
/// final predicted trajectory and environment frames).
struct Plan {
  std::vector<Action> actions;
  std::vector<SelfState> pred_states;   // world coordinates
  std::vector<RasterFrame> frames;      // final environment prediction
  std::vector<StepCost> final_costs;
  std::vector<double> j_trace;          // length iterations + 1
  std::vector<double> grad_norms;       // length iterations
  double wall_ms = 0.0;
  long env_advances = 0;
};

/// Gradient-descent MPC with a decoupled environment prediction: the
/// prediction is rolled once, then every iteration rolls the kinematics,
/// evaluates the discounted objective, backpropagates through masks and
/// kinematics only, and takes a clamped gradient step. Actions start at
/// zero; j_trace[0] is the zero-action objective.
Plan plan_decoupled(const Scene& scene0, const SelfState& self0,
                    const PlannerConfig& cfg,
                    const TrajectoryLog* replay = nullptr);

/// Same loop but the environment prediction is recomputed inside every
/// iteration from the current predicted ego states, and the backward pass
/// also runs through the environment VJP.
Plan plan_coupled(const Scene& scene0, const SelfState& self0,
                  const PlannerConfig& cfg);

inline constexpr int kPolicyFeatureCount = 14;

/// Affine driving policy over a fixed feature vector: ego speed, lateral
/// lane offset, and gap/relative-speed of the nearest lead and rear car in
/// the ego lane and both adjacent lanes.
struct PolicyParams {
  // weights[d * kPolicyFeatureCount + f] maps feature f to action dim d
  // (0 = accel, 1 = turn).
  std::array<double, 2 * kPolicyFeatureCount> weights{};
  std::array<double, 2> bias{};
};

struct PolicyFeatures {
  std::array<double, kPolicyFeatureCount> v{};
};

/// Feature extraction; gaps fall back to `gap_limit` and relative speeds
/// to 0 when a lane has no car on that side.
PolicyFeatures extract_features(const Scene& scene, const SelfState& self,
                                double gap_limit = 100.0);

Action act(const PolicyParams& policy, const Scene& scene,
           const SelfState& self, const ActionBounds& bounds);

struct TrainConfig {
  int horizon = 30;
  double dt = 0.1;
  double discount = 0.99;
  double learning_rate = 1e-3;
  CostWeights weights;
  MaskConfig mask;
  RasterGeometry raster;
  ActionBounds bounds;
  double divergence_limit = 1e6;
};

struct TrainResult {
  PolicyParams params;
  std::vector<double> loss_curve;  // mean objective per epoch
};

/// Trains the affine policy by rolling it through the kinematics against a
/// decoupled environment prediction for each scene, backpropagating the
/// discounted objective through masks, kinematics, and the feature
/// extraction, and taking one gradient step per scene. Deterministic for a
/// fixed seed. Throws when the objective exceeds divergence_limit.
TrainResult train_policy(std::span<const Scene> scenes,
                         const PolicyParams& init, const TrainConfig& cfg,
                         int epochs, std::uint64_t seed);

/// Gradient of the training objective on one scene with respect to the
/// policy parameters (exposed for gradient checking).
struct PolicyGrad {
  std::array<double, 2 * kPolicyFeatureCount> weights{};
  std::array<double, 2> bias{};
};
double policy_objective(const Scene& scene, const PolicyParams& params,
                        const TrainConfig& cfg, PolicyGrad* grad = nullptr);

}  // namespace egoplan
