#include "egoplan/envmodel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace egoplan {

void ReactiveParams::validate() const {
  if (!(gain >= 0.0) || !(scale > 0.0) || !(brake_cap > 0.0)) {
    throw std::invalid_argument(
        "reactive: gain must be >= 0, scale and brake_cap positive");
  }
}

namespace {

void check_horizon(int horizon) {
  if (horizon < 1) {
    throw std::invalid_argument("predict: horizon must be >= 1");
  }
}

SelfState advance_car(const SelfState& st, double dt, double decel) {
  SelfState out = st;
  out.x = st.x + st.s * st.ux * dt;
  out.y = st.y + st.s * st.uy * dt;
  out.s = st.s - decel * dt;
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

EnvPrediction predict_decoupled(const Scene& scene0, int horizon, double dt,
                                const RasterGeometry& geom, EnvStats* stats,
                                const TrajectoryLog* replay) {
  check_horizon(horizon);
  EnvPrediction pred;
  pred.scenes.reserve(horizon);
  pred.frames.reserve(horizon);

  Scene cur = scene0;
  for (int k = 1; k <= horizon; ++k) {
    if (replay != nullptr) {
      const int t = scene0.t + k;
      Scene next = scene0;
      next.t = t;
      next.others.clear();
      for (const auto& tr : replay->tracks) {
        if (tr.id == 0) continue;
        const int idx = t - tr.t0;
        if (idx >= 0 && idx < static_cast<int>(tr.states.size())) {
          next.others.push_back({tr.id, tr.states[idx], tr.dims});
        } else if (idx >= static_cast<int>(tr.states.size()) &&
                   !tr.states.empty()) {
          // Past the end of the recording: constant-velocity extrapolation.
          const SelfState& last = tr.states.back();
          SelfState st = last;
          const double over = (idx - static_cast<int>(tr.states.size()) + 1) * dt;
          st.x = last.x + last.s * last.ux * over;
          st.y = last.y + last.s * last.uy * over;
          next.others.push_back({tr.id, st, tr.dims});
        }
      }
      cur = std::move(next);
    } else {
      Scene next = cur;
      next.t = cur.t + 1;
      for (OtherVehicle& car : next.others) {
        car.state = advance_car(car.state, dt, 0.0);
      }
      cur = std::move(next);
    }
    if (stats != nullptr) ++stats->scene_advances;
    pred.scenes.push_back(cur);
    pred.frames.push_back(rasterize(cur, geom));
  }
  return pred;
}

EnvPrediction predict_coupled(const Scene& scene0,
                              std::span<const SelfState> pred_self,
                              const ReactiveParams& params, double dt,
                              const RasterGeometry& geom, EnvStats* stats) {
  params.validate();
  check_horizon(static_cast<int>(pred_self.size()));

  EnvPrediction pred;
  pred.scenes.reserve(pred_self.size());
  pred.frames.reserve(pred_self.size());

  Scene cur = scene0;
  for (std::size_t k = 0; k < pred_self.size(); ++k) {
    const SelfState& ego = pred_self[k];
    Scene next = cur;
    next.t = cur.t + 1;
    for (OtherVehicle& car : next.others) {
      const double closing = car.state.s - ego.s;
      const double rel = std::max(0.0, closing);
      const double sig = sigmoid((ego.x - car.state.x) / params.scale);
      const double decel = std::min(params.gain * rel * sig, params.brake_cap);
      car.state = advance_car(car.state, dt, decel);
    }
    cur = std::move(next);
    if (stats != nullptr) ++stats->scene_advances;
    pred.scenes.push_back(cur);
    pred.frames.push_back(rasterize(cur, geom));
  }
  return pred;
}

std::vector<SelfStateAdjoint> predict_coupled_vjp(
    const Scene& scene0, std::span<const SelfState> pred_self,
    const ReactiveParams& params, double dt,
    const std::vector<std::vector<CarCotangent>>& cot_cars) {
  params.validate();
  const std::size_t T = pred_self.size();
  check_horizon(static_cast<int>(T));
  if (cot_cars.size() != T) {
    throw std::invalid_argument(
        "predict_coupled_vjp: cotangent step count " +
        std::to_string(cot_cars.size()) + " does not match horizon " +
        std::to_string(T));
  }
  const std::size_t n_cars = scene0.others.size();
  for (const auto& per_step : cot_cars) {
    if (per_step.size() != n_cars) {
      throw std::invalid_argument(
          "predict_coupled_vjp: per-step cotangent car count mismatch");
    }
  }

  // Forward pass, keeping every intermediate car state.
  std::vector<std::vector<SelfState>> car_states(T + 1);
  car_states[0].reserve(n_cars);
  for (const auto& car : scene0.others) car_states[0].push_back(car.state);
  for (std::size_t k = 0; k < T; ++k) {
    const SelfState& ego = pred_self[k];
    car_states[k + 1].reserve(n_cars);
    for (std::size_t c = 0; c < n_cars; ++c) {
      const SelfState& st = car_states[k][c];
      const double closing = st.s - ego.s;
      const double rel = std::max(0.0, closing);
      const double sig = sigmoid((ego.x - st.x) / params.scale);
      const double decel = std::min(params.gain * rel * sig, params.brake_cap);
      car_states[k + 1].push_back(advance_car(st, dt, decel));
    }
  }

  std::vector<SelfStateAdjoint> g_ego(T);
  // Running cotangent of each car's (x, y, s) at step k.
  std::vector<CarCotangent> g_car(n_cars);
  for (std::size_t k = T; k-- > 0;) {
    const SelfState& ego = pred_self[k];
    for (std::size_t c = 0; c < n_cars; ++c) {
      CarCotangent g = g_car[c];
      g.x += cot_cars[k][c].x;
      g.y += cot_cars[k][c].y;
      g.s += cot_cars[k][c].s;

      const SelfState& st = car_states[k][c];
      const double closing = st.s - ego.s;
      const double rel = std::max(0.0, closing);
      const double z = (ego.x - st.x) / params.scale;
      const double sig = sigmoid(z);
      const double raw = params.gain * rel * sig;
      const bool capped = raw >= params.brake_cap;

      // Advance: x' = x + s*ux*dt, y' = y + s*uy*dt, s' = s - decel*dt.
      CarCotangent gp;
      gp.x = g.x;
      gp.y = g.y;
      gp.s = g.x * st.ux * dt + g.y * st.uy * dt + g.s;

      if (!capped && rel > 0.0) {
        const double g_decel = -g.s * dt;
        const double dsig = sig * (1.0 - sig) / params.scale;
        // decel = gain * rel * sig with rel = s_car - s_ego,
        // z = (x_ego - x_car)/scale.
        gp.s += g_decel * params.gain * sig;
        gp.x += g_decel * params.gain * rel * -dsig;
        g_ego[k].s += g_decel * params.gain * -sig;
        g_ego[k].x += g_decel * params.gain * rel * dsig;
      }
      g_car[c] = gp;
    }
  }
  return g_ego;
}

}  // namespace egoplan
