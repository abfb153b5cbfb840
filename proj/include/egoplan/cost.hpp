#pragma once

#include <span>
#include <vector>

#include "egoplan/raster.hpp"

namespace egoplan {

struct CostWeights {
  double proximity = 91.2;
  double lane = 3.06;
  double offroad = 2.88;
  double jerk = 0.1;
  double destination = 0.001;
};

/// One step's cost components. `jerk` is zero for per-step entries; the
/// jerk term is a sequence-level regularizer added once by
/// trajectory_cost.
struct StepCost {
  double proximity = 0.0;
  double lane = 0.0;
  double offroad = 0.0;
  double jerk = 0.0;
  double destination = 0.0;
  double total = 0.0;
};

/// Canonical weighted combination; StepCost::total always equals this.
double weighted_total(const StepCost& c, const CostWeights& w);

struct ObjectiveConfig {
  double discount = 0.99;
  int horizon = 30;
};

/// Inner products of the frame channels with the masks built at the
/// predicted ego state (frame-anchor coordinates):
///   proximity = <cars, M_car>, lane = <lanes, M_side>,
///   offroad = <offroad, M_side>, destination = -x.
StepCost step_cost(const RasterFrame& frame, const SelfState& rel_self,
                   const VehicleDims& dims, const CostWeights& weights,
                   const MaskConfig& mask_cfg);

/// Cotangent of the weighted step total with respect to the predicted ego
/// state.
SelfStateAdjoint step_cost_vjp(const RasterFrame& frame,
                               const SelfState& rel_self,
                               const VehicleDims& dims,
                               const CostWeights& weights,
                               const MaskConfig& mask_cfg, double cot_total);

/// (1/T) * sum_{t=2..T} |a_t - a_{t-1}|^2; zero for T = 1.
double jerk_cost(std::span<const Action> actions);
std::vector<Action> jerk_cost_vjp(std::span<const Action> actions, double cot);

struct TrajectoryCost {
  double J = 0.0;
  std::vector<StepCost> steps;
  double jerk = 0.0;  // undiscounted sequence-level term
};

/// J = sum_{t=1..T} gamma^t * weighted step total + w_jerk * jerk(actions).
/// The jerk term is defined over the whole sequence and enters once,
/// undiscounted.
TrajectoryCost trajectory_cost(std::span<const RasterFrame> frames,
                               std::span<const SelfState> rel_selves,
                               std::span<const Action> actions,
                               const VehicleDims& dims,
                               const CostWeights& weights,
                               const MaskConfig& mask_cfg,
                               const ObjectiveConfig& obj);

struct TrajectoryCostGrad {
  std::vector<SelfStateAdjoint> d_selves;
  std::vector<Action> d_actions;  // jerk path only; the state path flows
                                  // through d_selves and the rollout VJP
};

TrajectoryCostGrad trajectory_cost_vjp(std::span<const RasterFrame> frames,
                                       std::span<const SelfState> rel_selves,
                                       std::span<const Action> actions,
                                       const VehicleDims& dims,
                                       const CostWeights& weights,
                                       const MaskConfig& mask_cfg,
                                       const ObjectiveConfig& obj,
                                       double cot_J);

}  // namespace egoplan
