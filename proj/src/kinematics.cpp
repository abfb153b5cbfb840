#include "egoplan/kinematics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace egoplan {

namespace {

void check_inputs(const Action& action, const StepParams& params) {
  if (!(params.dt > 0.0)) {
    throw std::invalid_argument("step: dt must be positive");
  }
  if (!std::isfinite(action.accel) || !std::isfinite(action.turn)) {
    throw std::invalid_argument("step: action components must be finite");
  }
}

constexpr double kDegenerateNorm = 1e-12;

}  // namespace

SelfState step(const SelfState& state, const Action& action,
               const StepParams& params) {
  check_inputs(action, params);
  const double dt = params.dt;
  const double c = action.turn * dt;
  const double px = state.ux + c * state.uy;
  const double py = state.uy - c * state.ux;
  const double n = std::sqrt(px * px + py * py);
  if (n < kDegenerateNorm) {
    throw std::invalid_argument(
        "step: degenerate direction, pre-normalization norm " +
        std::to_string(n));
  }
  SelfState out;
  out.x = state.x + state.s * state.ux * dt;
  out.y = state.y + state.s * state.uy * dt;
  out.s = state.s + action.accel * dt;
  if (c == 0.0) {
    // A zero turn blends nothing in; keep the heading bit-exact instead of
    // renormalizing away the last ulp.
    out.ux = state.ux;
    out.uy = state.uy;
  } else {
    out.ux = px / n;
    out.uy = py / n;
  }
  return out;
}

std::vector<SelfState> rollout(const SelfState& state0,
                               std::span<const Action> actions,
                               const StepParams& params) {
  if (actions.empty()) {
    throw std::invalid_argument("rollout: empty action sequence");
  }
  std::vector<SelfState> states;
  states.reserve(actions.size());
  SelfState cur = state0;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    try {
      cur = step(cur, actions[k], params);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("rollout: at action index " +
                                  std::to_string(k) + ": " + e.what());
    }
    states.push_back(cur);
  }
  return states;
}

std::pair<SelfStateAdjoint, Action> step_vjp(const SelfState& state,
                                             const Action& action,
                                             const StepParams& params,
                                             const SelfStateAdjoint& g) {
  check_inputs(action, params);
  const double dt = params.dt;
  const double c = action.turn * dt;
  const double px = state.ux + c * state.uy;
  const double py = state.uy - c * state.ux;
  const double n = std::sqrt(px * px + py * py);
  if (n < kDegenerateNorm) {
    throw std::invalid_argument(
        "step_vjp: degenerate direction, pre-normalization norm " +
        std::to_string(n));
  }
  const double nux = px / n;
  const double nuy = py / n;

  // u' = p/|p|  =>  dp^T = (I - u'u'^T)/|p| applied to du'^T.
  const double udotg = nux * g.ux + nuy * g.uy;
  const double gpx = (g.ux - udotg * nux) / n;
  const double gpy = (g.uy - udotg * nuy) / n;

  SelfStateAdjoint gin;
  gin.x = g.x;
  gin.y = g.y;
  gin.s = g.x * state.ux * dt + g.y * state.uy * dt + g.s;
  if (c == 0.0) {
    // Matches the bit-exact heading pass-through in step.
    gin.ux = g.x * state.s * dt + g.ux;
    gin.uy = g.y * state.s * dt + g.uy;
  } else {
    gin.ux = g.x * state.s * dt + gpx - c * gpy;
    gin.uy = g.y * state.s * dt + c * gpx + gpy;
  }

  Action ga;
  ga.accel = g.s * dt;
  ga.turn = dt * (state.uy * gpx - state.ux * gpy);
  return {gin, ga};
}

std::pair<SelfStateAdjoint, std::vector<Action>> rollout_vjp(
    const SelfState& state0, std::span<const Action> actions,
    const StepParams& params, std::span<const SelfStateAdjoint> cot_steps) {
  if (actions.empty()) {
    throw std::invalid_argument("rollout_vjp: empty action sequence");
  }
  if (cot_steps.size() != actions.size()) {
    throw std::invalid_argument(
        "rollout_vjp: cotangent count " + std::to_string(cot_steps.size()) +
        " does not match action count " + std::to_string(actions.size()));
  }
  const std::size_t T = actions.size();

  // Recompute the forward pass to get the step input states.
  std::vector<SelfState> inputs;
  inputs.reserve(T);
  SelfState cur = state0;
  for (std::size_t k = 0; k < T; ++k) {
    inputs.push_back(cur);
    cur = step(cur, actions[k], params);
  }

  std::vector<Action> grads(T);
  SelfStateAdjoint g = cot_steps[T - 1];
  for (std::size_t k = T; k-- > 0;) {
    auto [gin, ga] = step_vjp(inputs[k], actions[k], params, g);
    grads[k] = ga;
    g = gin;
    if (k > 0) g += cot_steps[k - 1];
  }
  return {g, std::move(grads)};
}

SelfState to_frame(const SelfState& anchor, const SelfState& state) {
  const Vec2 rp = to_body(state.pos() - anchor.pos(), anchor.heading());
  const Vec2 ru = to_body(state.heading(), anchor.heading());
  return {rp.x, rp.y, ru.x, ru.y, state.s};
}

SelfStateAdjoint to_frame_vjp(const SelfState& anchor,
                              const SelfStateAdjoint& cot_rel) {
  const Vec2 gp = from_body({cot_rel.x, cot_rel.y}, anchor.heading());
  const Vec2 gu = from_body({cot_rel.ux, cot_rel.uy}, anchor.heading());
  return {gp.x, gp.y, gu.x, gu.y, cot_rel.s};
}

}  // namespace egoplan
