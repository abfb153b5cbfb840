#pragma once

#include <span>
#include <vector>

#include "egoplan/raster.hpp"
#include "egoplan/world.hpp"

namespace egoplan {

enum class PredictorKind { replay, constant_velocity, coupled_reactive };

/// Smooth reactive car-following used by the coupled predictor: a car
/// brakes at gain * (closing speed)^+ * sigmoid(-lead/scale), capped.
struct ReactiveParams {
  double gain = 0.5;      // 1/s
  double scale = 10.0;    // m
  double brake_cap = 8.0; // m/s^2

  void validate() const;
};

/// Predicted future environment: T scenes in the ground-truth domain and
/// their rasterized frames. All frames share one anchor, the plan-start
/// ego pose (each predicted scene carries that anchor as its ego; the ego
/// is never advanced here).
struct EnvPrediction {
  std::vector<Scene> scenes;
  std::vector<RasterFrame> frames;
};

/// Counts individual scene advances so planner call patterns can be
/// asserted. One counter per planner instance, never global.
struct EnvStats {
  long scene_advances = 0;
};

/// Rolls every other car forward by constant velocity (or by replaying log
/// rows t0+1..t0+T when a log is attached). Takes no ego action or future
/// ego state: the prediction is computed once per planning step.
EnvPrediction predict_decoupled(const Scene& scene0, int horizon, double dt,
                                const RasterGeometry& geom,
                                EnvStats* stats = nullptr,
                                const TrajectoryLog* replay = nullptr);

/// Constant velocity plus a smooth braking response to the predicted ego
/// states (world coordinates, one per step):
///   decel_k = min(gain * (s_car - s_ego,k)^+ * sigmoid((x_ego,k - x_car)/scale), cap)
/// evaluated on the car state before the advance. Differentiable w.r.t.
/// the predicted ego positions and speeds.
EnvPrediction predict_coupled(const Scene& scene0,
                              std::span<const SelfState> pred_self,
                              const ReactiveParams& params, double dt,
                              const RasterGeometry& geom,
                              EnvStats* stats = nullptr);

/// Cotangent on one predicted car's continuous outputs.
struct CarCotangent {
  double x = 0.0;
  double y = 0.0;
  double s = 0.0;
};

/// Reverse-mode derivative of predict_coupled in the scene domain:
/// cot_cars[k][c] is the cotangent of car c's state at step k+1; returns
/// one ego-state cotangent per predicted step. Only the ego longitudinal
/// position and speed couple into the cars, so y/ux/uy components are
/// zero.
std::vector<SelfStateAdjoint> predict_coupled_vjp(
    const Scene& scene0, std::span<const SelfState> pred_self,
    const ReactiveParams& params, double dt,
    const std::vector<std::vector<CarCotangent>>& cot_cars);

}  // namespace egoplan
