#include <cmath>

#include <stdexcept>

#include "doctest.h"
#include "egoplan/envmodel.hpp"
#include "support/finite_diff.hpp"

using namespace egoplan;
using namespace egoplan::testing;

namespace {

const RasterGeometry kGeom{};
const VehicleDims kDims{2.0, 4.8};

Scene base_scene() {
  Scene sc;
  sc.ego = {0, 0, 1, 0, 15};
  sc.ego_dims = kDims;
  sc.lanes = make_lanes(3, 3.7);
  return sc;
}

bool frames_equal(const RasterFrame& a, const RasterFrame& b) {
  return a.lanes.data == b.lanes.data && a.cars.data == b.cars.data &&
         a.offroad.data == b.offroad.data;
}

}  // namespace

TEST_CASE("constant-velocity prediction advances cars linearly") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{10, 0, 1, 0, 5}, kDims});
  const EnvPrediction pred = predict_decoupled(sc, 3, 0.1, kGeom);
  REQUIRE(pred.scenes.size() == 3);
  CHECK(pred.scenes[0].others[0].state.x == doctest::Approx(10.5).epsilon(1e-15));
  CHECK(pred.scenes[1].others[0].state.x == doctest::Approx(11.0).epsilon(1e-15));
  CHECK(pred.scenes[2].others[0].state.x == doctest::Approx(11.5).epsilon(1e-15));
  CHECK(pred.scenes[2].others[0].state.s == 5.0);
}

TEST_CASE("zero-speed car stays put over one step") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{8, 1, 1, 0, 0}, kDims});
  const EnvPrediction pred = predict_decoupled(sc, 1, 0.1, kGeom);
  CHECK(pred.scenes[0].others[0].state.x == 8.0);
  CHECK(pred.scenes[0].others[0].state.y == 1.0);
  CHECK(pred.scenes[0].ego.x == sc.ego.x);  // anchor carried, not advanced
}

TEST_CASE("replay prediction returns the recorded rows exactly") {
  const TrajectoryLog log = make_stress_scenario(StressConfig{});
  const LaneGeometry lanes = make_lanes(3, 3.7);
  const Scene sc = scene_at(log, 5, lanes);
  const int T = 8;
  const EnvPrediction pred = predict_decoupled(sc, T, log.dt, kGeom, nullptr, &log);
  for (int k = 0; k < T; ++k) {
    for (const OtherVehicle& car : pred.scenes[k].others) {
      const VehicleTrack* tr = log.find(car.id);
      REQUIRE(tr != nullptr);
      const SelfState& row = tr->states[5 + k + 1 - tr->t0];
      CHECK(car.state.x == row.x);
      CHECK(car.state.y == row.y);
      CHECK(car.state.s == row.s);
    }
  }
}

TEST_CASE("horizon must be positive") {
  CHECK_THROWS_AS(predict_decoupled(base_scene(), 0, 0.1, kGeom),
                  std::invalid_argument);
}

TEST_CASE("coupled prediction with zero gain equals the decoupled one bitwise") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{12, 0, 1, 0, 9}, kDims});
  sc.others.push_back({2, SelfState{-15, -3.7, 1, 0, 22}, kDims});
  const int T = 10;

  std::vector<SelfState> pred_self(T);
  for (int k = 0; k < T; ++k) {
    pred_self[k] = {1.5 * (k + 1), 0.0, 1.0, 0.0, 15.0};
  }
  ReactiveParams params;
  params.gain = 0.0;

  const EnvPrediction a = predict_decoupled(sc, T, 0.1, kGeom);
  const EnvPrediction b = predict_coupled(sc, pred_self, params, 0.1, kGeom);
  for (int k = 0; k < T; ++k) {
    for (std::size_t c = 0; c < sc.others.size(); ++c) {
      CHECK(a.scenes[k].others[c].state.x == b.scenes[k].others[c].state.x);
      CHECK(a.scenes[k].others[c].state.y == b.scenes[k].others[c].state.y);
      CHECK(a.scenes[k].others[c].state.s == b.scenes[k].others[c].state.s);
    }
    CHECK(frames_equal(a.frames[k], b.frames[k]));
  }
}

TEST_CASE("braking term is negligible when the car is far ahead") {
  ReactiveParams params;  // scale = 10
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{250, 0, 1, 0, 5}, kDims});  // dx >> scale
  std::vector<SelfState> pred_self(1);
  pred_self[0] = {0, 0, 1, 0, 30};  // closing speed 5 - 30 < 0? use rear car
  // Put the ego far behind and slower so the closing speed is positive.
  pred_self[0].s = 0.0;
  const EnvPrediction pred = predict_coupled(sc, pred_self, params, 0.1, kGeom);
  const double ds = sc.others[0].state.s - pred.scenes[0].others[0].state.s;
  const double decel = ds / 0.1;
  CHECK(decel < 1e-6 * params.brake_cap);
  CHECK(decel >= 0.0);
}

TEST_CASE("a rear car brakes when the ego is just ahead and slower") {
  ReactiveParams params;
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{-8, 0, 1, 0, 25}, kDims});
  std::vector<SelfState> pred_self{{2, 0, 1, 0, 10}};
  const EnvPrediction pred = predict_coupled(sc, pred_self, params, 0.1, kGeom);
  CHECK(pred.scenes[0].others[0].state.s < 25.0);
}

TEST_CASE("coupled VJP matches finite differences") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{14, 0, 1, 0, 18}, kDims});
  sc.others.push_back({2, SelfState{-9, 3.7, 1, 0, 24}, kDims});
  ReactiveParams params;
  params.gain = 0.8;
  const int T = 6;
  const double dt = 0.1;

  Rng rng(64);
  int accepted = 0;
  while (accepted < 30) {
    std::vector<SelfState> pred_self(T);
    double x = 0.0;
    for (int k = 0; k < T; ++k) {
      x += rng.uniform(0.5, 2.0);
      pred_self[k] = {x, 0.0, 1.0, 0.0, rng.uniform(5.0, 22.0)};
    }

    // Keep away from the relu and cap kinks of the braking term.
    bool ok = true;
    {
      Scene cur = sc;
      for (int k = 0; k < T && ok; ++k) {
        for (auto& car : cur.others) {
          const double closing = car.state.s - pred_self[k].s;
          if (std::abs(closing) < 1e-3) ok = false;
          const double sig =
              1.0 / (1.0 + std::exp(-(pred_self[k].x - car.state.x) / params.scale));
          const double raw = params.gain * std::max(0.0, closing) * sig;
          if (std::abs(raw - params.brake_cap) < 1e-3) ok = false;
          car.state.x += car.state.s * dt;
          car.state.s -= std::min(raw, params.brake_cap) * dt;
        }
      }
    }
    if (!ok) continue;
    ++accepted;

    // Random cotangents on every predicted car state.
    Rng crng(accepted * 7919);
    std::vector<std::vector<CarCotangent>> cots(
        T, std::vector<CarCotangent>(sc.others.size()));
    for (auto& per_step : cots) {
      for (auto& c : per_step) {
        c = {crng.uniform(-1, 1), crng.uniform(-1, 1), crng.uniform(-1, 1)};
      }
    }

    auto scalar = [&](const std::vector<SelfState>& selves) {
      const EnvPrediction p = predict_coupled(sc, selves, params, dt, kGeom);
      double acc = 0.0;
      for (int k = 0; k < T; ++k) {
        for (std::size_t c = 0; c < sc.others.size(); ++c) {
          const SelfState& st = p.scenes[k].others[c].state;
          acc += cots[k][c].x * st.x + cots[k][c].y * st.y + cots[k][c].s * st.s;
        }
      }
      return acc;
    };

    // Roundoff scale: positive-sum bound on the cotangent contraction.
    double abs_scale = 0.0;
    {
      const EnvPrediction p = predict_coupled(sc, pred_self, params, dt, kGeom);
      for (int k = 0; k < T; ++k) {
        for (std::size_t c = 0; c < sc.others.size(); ++c) {
          const SelfState& st = p.scenes[k].others[c].state;
          abs_scale += std::abs(cots[k][c].x * st.x) +
                       std::abs(cots[k][c].y * st.y) +
                       std::abs(cots[k][c].s * st.s);
        }
      }
    }
    const auto g = predict_coupled_vjp(sc, pred_self, params, dt, cots);
    std::vector<double> analytic, numeric;
    for (int k = 0; k < T; ++k) {
      for (int d = 0; d < 2; ++d) {  // x and s couple into the cars
        auto mod = pred_self;
        double* field = d == 0 ? &mod[k].x : &mod[k].s;
        const double base = *field;
        *field = base + kFdStep;
        const double hi = scalar(mod);
        *field = base - kFdStep;
        const double lo = scalar(mod);
        numeric.push_back((hi - lo) / (2 * kFdStep));
        analytic.push_back(d == 0 ? g[k].x : g[k].s);
      }
    }
    CHECK(max_rel_err(analytic, numeric, fd_noise_floor(abs_scale)) <= 1e-5);
  }
}

TEST_CASE("decoupled prediction ignores the ego: speed perturbation") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{10, 0, 1, 0, 6}, kDims});
  Scene perturbed = sc;
  perturbed.ego.s += 7.5;

  const EnvPrediction a = predict_decoupled(sc, 5, 0.1, kGeom);
  const EnvPrediction b = predict_decoupled(perturbed, 5, 0.1, kGeom);
  for (int k = 0; k < 5; ++k) {
    CHECK(frames_equal(a.frames[k], b.frames[k]));  // pose unchanged
  }
}

TEST_CASE("decoupled prediction ignores the ego: pose perturbation") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{10, 0, 1, 0, 6}, kDims});
  Scene perturbed = sc;
  perturbed.ego.x += 3.0;
  perturbed.ego.y -= 1.0;

  const EnvPrediction a = predict_decoupled(sc, 5, 0.1, kGeom);
  const EnvPrediction b = predict_decoupled(perturbed, 5, 0.1, kGeom);
  for (int k = 0; k < 5; ++k) {
    // The frames shift with the anchor; the predicted car states do not.
    CHECK(a.scenes[k].others[0].state.x == b.scenes[k].others[0].state.x);
    CHECK(a.scenes[k].others[0].state.y == b.scenes[k].others[0].state.y);
    CHECK(a.scenes[k].others[0].state.s == b.scenes[k].others[0].state.s);
  }
}

TEST_CASE("scene-advance counter counts one advance per predicted step") {
  Scene sc = base_scene();
  sc.others.push_back({1, SelfState{10, 0, 1, 0, 6}, kDims});
  EnvStats stats;
  predict_decoupled(sc, 7, 0.1, kGeom, &stats);
  CHECK(stats.scene_advances == 7);
  std::vector<SelfState> pred_self(4, SelfState{0, 0, 1, 0, 10});
  predict_coupled(sc, pred_self, ReactiveParams{}, 0.1, kGeom, &stats);
  CHECK(stats.scene_advances == 11);
}
