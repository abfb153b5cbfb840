#include "egoplan/cost.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace egoplan {

double weighted_total(const StepCost& c, const CostWeights& w) {
  return w.proximity * c.proximity + w.lane * c.lane + w.offroad * c.offroad +
         w.jerk * c.jerk + w.destination * c.destination;
}

namespace {

double inner(const Grid& a, const Grid& b) {
  double acc = 0.0;
  const std::size_t n = a.data.size();
  for (std::size_t k = 0; k < n; ++k) acc += a.data[k] * b.data[k];
  return acc;
}

void check_weights(const CostWeights& w) {
  if (w.proximity < 0 || w.lane < 0 || w.offroad < 0 || w.jerk < 0 ||
      w.destination < 0) {
    throw std::invalid_argument("cost: weights must be nonnegative");
  }
}

}  // namespace

StepCost step_cost(const RasterFrame& frame, const SelfState& rel_self,
                   const VehicleDims& dims, const CostWeights& weights,
                   const MaskConfig& mask_cfg) {
  check_weights(weights);
  const MaskPair masks = build_masks(rel_self, dims, mask_cfg, frame.geom);

  StepCost c;
  c.proximity = inner(frame.cars, masks.car);
  c.lane = inner(frame.lanes, masks.side);
  c.offroad = inner(frame.offroad, masks.side);
  c.destination = -rel_self.x;
  c.jerk = 0.0;
  c.total = weighted_total(c, weights);
  return c;
}

SelfStateAdjoint step_cost_vjp(const RasterFrame& frame,
                               const SelfState& rel_self,
                               const VehicleDims& dims,
                               const CostWeights& weights,
                               const MaskConfig& mask_cfg, double cot_total) {
  check_weights(weights);
  Grid cot_car(frame.geom.height_cells, frame.geom.width_cells);
  Grid cot_side(frame.geom.height_cells, frame.geom.width_cells);
  const std::size_t n = cot_car.data.size();
  for (std::size_t k = 0; k < n; ++k) {
    cot_car.data[k] = cot_total * weights.proximity * frame.cars.data[k];
    cot_side.data[k] = cot_total * (weights.lane * frame.lanes.data[k] +
                                    weights.offroad * frame.offroad.data[k]);
  }
  SelfStateAdjoint g_self =
      build_masks_vjp(rel_self, dims, mask_cfg, frame.geom, cot_car, cot_side);
  g_self.x += cot_total * weights.destination * -1.0;
  return g_self;
}

double jerk_cost(std::span<const Action> actions) {
  const std::size_t T = actions.size();
  if (T == 0) throw std::invalid_argument("jerk_cost: empty action sequence");
  if (T == 1) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 1; t < T; ++t) {
    const double da = actions[t].accel - actions[t - 1].accel;
    const double dturn = actions[t].turn - actions[t - 1].turn;
    acc += da * da + dturn * dturn;
  }
  return acc / static_cast<double>(T);
}

std::vector<Action> jerk_cost_vjp(std::span<const Action> actions, double cot) {
  const std::size_t T = actions.size();
  if (T == 0) throw std::invalid_argument("jerk_cost_vjp: empty sequence");
  std::vector<Action> g(T);
  if (T == 1) return g;
  const double scale = 2.0 * cot / static_cast<double>(T);
  for (std::size_t t = 1; t < T; ++t) {
    const double da = actions[t].accel - actions[t - 1].accel;
    const double dturn = actions[t].turn - actions[t - 1].turn;
    g[t].accel += scale * da;
    g[t].turn += scale * dturn;
    g[t - 1].accel -= scale * da;
    g[t - 1].turn -= scale * dturn;
  }
  return g;
}

namespace {

void check_lengths(std::size_t frames, std::size_t selves, std::size_t actions,
                   const ObjectiveConfig& obj) {
  if (!(obj.discount > 0.0) || obj.discount > 1.0) {
    throw std::invalid_argument("trajectory_cost: discount must be in (0, 1]");
  }
  if (frames == 0 || frames != selves || frames != actions) {
    throw std::invalid_argument(
        "trajectory_cost: frames/states/actions length mismatch (" +
        std::to_string(frames) + "/" + std::to_string(selves) + "/" +
        std::to_string(actions) + ")");
  }
}

}  // namespace

TrajectoryCost trajectory_cost(std::span<const RasterFrame> frames,
                               std::span<const SelfState> rel_selves,
                               std::span<const Action> actions,
                               const VehicleDims& dims,
                               const CostWeights& weights,
                               const MaskConfig& mask_cfg,
                               const ObjectiveConfig& obj) {
  check_lengths(frames.size(), rel_selves.size(), actions.size(), obj);
  TrajectoryCost out;
  out.steps.reserve(frames.size());
  double discount = 1.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    discount *= obj.discount;
    const StepCost c =
        step_cost(frames[t], rel_selves[t], dims, weights, mask_cfg);
    out.J += discount * c.total;
    out.steps.push_back(c);
  }
  out.jerk = jerk_cost(actions);
  out.J += weights.jerk * out.jerk;
  return out;
}

TrajectoryCostGrad trajectory_cost_vjp(std::span<const RasterFrame> frames,
                                       std::span<const SelfState> rel_selves,
                                       std::span<const Action> actions,
                                       const VehicleDims& dims,
                                       const CostWeights& weights,
                                       const MaskConfig& mask_cfg,
                                       const ObjectiveConfig& obj,
                                       double cot_J) {
  check_lengths(frames.size(), rel_selves.size(), actions.size(), obj);
  TrajectoryCostGrad g;
  g.d_selves.reserve(frames.size());
  double discount = 1.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    discount *= obj.discount;
    g.d_selves.push_back(step_cost_vjp(frames[t], rel_selves[t], dims, weights,
                                       mask_cfg, cot_J * discount));
  }
  g.d_actions = jerk_cost_vjp(actions, cot_J * weights.jerk);
  return g;
}

}  // namespace egoplan
