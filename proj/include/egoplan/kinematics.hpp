#pragma once

#include <span>
#include <utility>
#include <vector>

#include "egoplan/geometry.hpp"

namespace egoplan {

/// Ego vehicle state: position, unit heading direction, scalar speed.
///
/// Every operation that returns a SelfState restores the unit-heading
/// invariant (ux^2 + uy^2 = 1 within 1e-9). Speed may go negative; range
/// checks belong to the simulation layer.
struct SelfState {
  double x = 0.0;
  double y = 0.0;
  double ux = 1.0;
  double uy = 0.0;
  double s = 0.0;

  Vec2 pos() const { return {x, y}; }
  Vec2 heading() const { return {ux, uy}; }
};

/// Per-step command: longitudinal acceleration and turning strength.
/// The turn command blends an orthogonal unit vector into the heading,
/// scaled by dt, so it acts as a dimensionless rotation rate.
struct Action {
  double accel = 0.0;
  double turn = 0.0;
};

/// Cotangent of a scalar objective with respect to each SelfState field.
struct SelfStateAdjoint {
  double x = 0.0;
  double y = 0.0;
  double ux = 0.0;
  double uy = 0.0;
  double s = 0.0;

  SelfStateAdjoint& operator+=(const SelfStateAdjoint& o) {
    x += o.x;
    y += o.y;
    ux += o.ux;
    uy += o.uy;
    s += o.s;
    return *this;
  }
};

struct StepParams {
  double dt = 0.1;
};

/// One step of the kinematic bicycle model:
///   x'  = x + s*ux*dt
///   y'  = y + s*uy*dt
///   s'  = s + accel*dt
///   u'  = unit(u + turn*dt*(uy, -ux))
///
/// Throws std::invalid_argument on non-finite actions, non-positive dt,
/// or a degenerate pre-normalization direction (norm < 1e-12).
SelfState step(const SelfState& state, const Action& action,
               const StepParams& params);

/// Applies step repeatedly; element k of the result is the state after
/// k+1 steps. Requires a non-empty action sequence.
std::vector<SelfState> rollout(const SelfState& state0,
                               std::span<const Action> actions,
                               const StepParams& params);

/// Reverse-mode derivative of step: given the cotangent of the output
/// state, returns the cotangents of the input state and of the action.
std::pair<SelfStateAdjoint, Action> step_vjp(const SelfState& state,
                                             const Action& action,
                                             const StepParams& params,
                                             const SelfStateAdjoint& cot_out);

/// Reverse sweep over a rollout. cot_steps[k] is the cotangent injected
/// at the k-th output state; returns the cotangent of state0 and one
/// gradient per action, each aggregating all downstream cotangents.
std::pair<SelfStateAdjoint, std::vector<Action>> rollout_vjp(
    const SelfState& state0, std::span<const Action> actions,
    const StepParams& params, std::span<const SelfStateAdjoint> cot_steps);

/// Re-expresses `state` in the body frame of `anchor` (anchor maps to the
/// origin with heading (1,0); speed is carried over unchanged).
SelfState to_frame(const SelfState& anchor, const SelfState& state);

/// Transpose of the (constant, linear) to_frame map: pushes a cotangent in
/// anchor coordinates back to world coordinates.
SelfStateAdjoint to_frame_vjp(const SelfState& anchor,
                              const SelfStateAdjoint& cot_rel);

}  // namespace egoplan
