#include "egoplan/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "egoplan/planner.hpp"
#include "egoplan/rng.hpp"

namespace egoplan {

namespace {

constexpr double kH = 1e-6;

/// Compares one analytic derivative against central differences of
/// `scalar`. Differences below the roundoff floor eps*f_scale/h say
/// nothing about the analytic value (f_scale is a cancellation-free bound
/// on the contraction); a wide window that straddles a kink is retried at
/// a narrower step.
double coord_err(const std::function<double(double)>& scalar, double x0,
                 double analytic, double tol, double f_scale) {
  f_scale = std::max(1.0, f_scale);
  double err = 1e300;
  for (double h : {kH, kH / 10, kH / 100}) {
    const double fd = (scalar(x0 + h) - scalar(x0 - h)) / (2 * h);
    const double diff = std::abs(analytic - fd);
    const double floor = 2e-15 * f_scale / h;
    const double e =
        diff <= floor ? 0.0 : diff / std::max(std::abs(analytic), std::abs(fd));
    err = std::min(err, e);
    if (err <= tol) break;
  }
  return err;
}

SelfState random_state(Rng& rng) {
  const double angle = rng.uniform(-0.5, 0.5);
  return {rng.uniform(-20.0, 20.0), rng.uniform(-6.0, 6.0), std::cos(angle),
          std::sin(angle), rng.uniform(-2.0, 30.0)};
}

bool mask_kink_free(const SelfState& rel, const VehicleDims& dims,
                    const MaskConfig& mask, const RasterGeometry& geom,
                    double b_margin, double s_margin) {
  if (std::abs(rel.s - mask.speed_floor) < s_margin) return false;
  const double d_x = mask_reach_x(rel, dims, mask);
  const double d_y = dims.width / 2 + mask.lane_pad;
  for (int i = 0; i < geom.height_cells; ++i) {
    for (int j = 0; j < geom.width_cells; ++j) {
      const Vec2 b = to_body(mesh_coord(geom, i, j) - rel.pos(), rel.heading());
      if (std::abs(b.x) < b_margin || std::abs(b.y) < b_margin ||
          std::abs(std::abs(b.x) - d_x) < b_margin ||
          std::abs(std::abs(b.y) - d_y) < b_margin ||
          std::abs(std::abs(b.y) - dims.width / 2) < b_margin) {
        return false;
      }
    }
  }
  return true;
}

Scene traffic_scene(std::uint64_t seed) {
  const TrajectoryLog log = make_traffic_scenario(seed, 0.35, 3, 0.2);
  return scene_at(log, 0, make_lanes(3, 3.7));
}

struct SuiteAccum {
  double worst = 0.0;
  int samples = 0;
};

}  // namespace

std::vector<GradSuiteResult> run_gradcheck(const RunConfig& cfg,
                                           const GradcheckOptions& opt) {
  const int n = std::max(1, opt.samples);
  const RasterGeometry geom = cfg.raster;
  const MaskConfig mask = cfg.mask;
  const VehicleDims dims{2.0, 4.8};
  std::vector<GradSuiteResult> results;

  auto finish = [&](const std::string& name, const SuiteAccum& acc,
                    double tol) {
    GradSuiteResult r;
    r.name = name;
    r.samples = acc.samples;
    r.worst_rel_err = acc.worst;
    r.tolerance = tol;
    r.pass = acc.worst <= tol;
    results.push_back(r);
  };
  auto flip = [&](const std::string& name) {
    return opt.inject_sign_flip == name ? -1.0 : 1.0;
  };

  // 1. Kinematics rollout adjoints over random horizons.
  {
    const double tol = 1e-5;
    SuiteAccum acc;
    Rng rng(mix_seed(opt.seed, 1));
    for (int s = 0; s < n; ++s) {
      const int T = 1 + static_cast<int>(rng.below(30));
      const SelfState st0 = random_state(rng);
      std::vector<Action> actions(T);
      for (auto& a : actions) {
        a = {rng.uniform(-5.0, 5.0), rng.uniform(-0.8, 0.8)};
      }
      std::vector<SelfStateAdjoint> cots(T);
      for (auto& c : cots) {
        c = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
             rng.uniform(-1, 1), rng.uniform(-1, 1)};
      }
      auto scalar = [&](const std::vector<Action>& acts) {
        const auto states = rollout(st0, acts, {cfg.dt});
        double v = 0;
        for (int k = 0; k < T; ++k) {
          v += cots[k].x * states[k].x + cots[k].y * states[k].y +
               cots[k].ux * states[k].ux + cots[k].uy * states[k].uy +
               cots[k].s * states[k].s;
        }
        return v;
      };
      double f_scale = 0;
      {
        const auto states = rollout(st0, actions, {cfg.dt});
        for (int k = 0; k < T; ++k) {
          f_scale += std::abs(cots[k].x * states[k].x) +
                     std::abs(cots[k].y * states[k].y) +
                     std::abs(cots[k].s * states[k].s) + 2.0;
        }
      }
      auto [g0, grads] = rollout_vjp(st0, actions, {cfg.dt}, cots);
      (void)g0;
      for (int k = 0; k < T; ++k) {
        for (int d = 0; d < 2; ++d) {
          const double analytic =
              flip("kinematics") * (d == 0 ? grads[k].accel : grads[k].turn);
          auto f = [&](double v) {
            auto mod = actions;
            (d == 0 ? mod[k].accel : mod[k].turn) = v;
            return scalar(mod);
          };
          const double x0 = d == 0 ? actions[k].accel : actions[k].turn;
          acc.worst =
              std::max(acc.worst, coord_err(f, x0, analytic, tol, f_scale));
        }
      }
      ++acc.samples;
    }
    finish("kinematics", acc, tol);
  }

  // 2. Mask construction adjoints.
  {
    const double tol = 1e-5;
    SuiteAccum acc;
    Rng rng(mix_seed(opt.seed, 2));
    while (acc.samples < n) {
      SelfState rel;
      const double angle = rng.uniform(-0.3, 0.3);
      rel.x = rng.uniform(-10.0, 10.0);
      rel.y = rng.uniform(-3.0, 3.0);
      rel.ux = std::cos(angle);
      rel.uy = std::sin(angle);
      rel.s = rng.uniform(4.0, 20.0);
      if (!mask_kink_free(rel, dims, mask, geom, 2e-4, 1e-2)) continue;

      Grid cot_car(geom.height_cells, geom.width_cells);
      Grid cot_side(geom.height_cells, geom.width_cells);
      for (auto& v : cot_car.data) v = rng.uniform(-1, 1);
      for (auto& v : cot_side.data) v = rng.uniform(-1, 1);
      const SelfStateAdjoint g =
          build_masks_vjp(rel, dims, mask, geom, cot_car, cot_side);
      auto scalar = [&](const SelfState& st) {
        const MaskPair m = build_masks(st, dims, mask, geom);
        double v = 0;
        for (std::size_t k = 0; k < m.car.data.size(); ++k) {
          v += cot_car.data[k] * m.car.data[k] +
               cot_side.data[k] * m.side.data[k];
        }
        return v;
      };
      double f_scale = 0;
      {
        const MaskPair m = build_masks(rel, dims, mask, geom);
        for (std::size_t k = 0; k < m.car.data.size(); ++k) {
          f_scale += std::abs(cot_car.data[k] * m.car.data[k]) +
                     std::abs(cot_side.data[k] * m.side.data[k]);
        }
      }
      auto field = [](SelfState& st, int d) -> double& {
        switch (d) {
          case 0: return st.x;
          case 1: return st.y;
          case 2: return st.ux;
          case 3: return st.uy;
          default: return st.s;
        }
      };
      const double analytic[5] = {g.x, g.y, g.ux, g.uy, g.s};
      for (int d = 0; d < 5; ++d) {
        auto f = [&](double v) {
          SelfState st = rel;
          field(st, d) = v;
          return scalar(st);
        };
        SelfState probe = rel;
        const double x0 = field(probe, d);
        acc.worst = std::max(
            acc.worst,
            coord_err(f, x0, flip("masks") * analytic[d], tol, f_scale));
      }
      ++acc.samples;
    }
    finish("masks", acc, tol);
  }

  // 3. Full cost chain over actions (rollout -> frame transform -> masks
  //    -> discounted objective), subset of coordinates per sample.
  {
    const double tol = 1e-4;
    SuiteAccum acc;
    Rng rng(mix_seed(opt.seed, 3));
    const int T = 30;
    const ObjectiveConfig obj{cfg.planner.discount, T};
    while (acc.samples < n) {
      Scene sc = traffic_scene(rng.raw());
      EnvPrediction pred = predict_decoupled(sc, T, cfg.dt, geom);
      std::vector<Action> actions(T);
      for (auto& a : actions) {
        a = {rng.uniform(-1.0, 1.0), rng.uniform(-0.1, 0.1)};
      }
      const auto world = rollout(sc.ego, actions, {cfg.dt});
      bool ok = true;
      for (const auto& wst : world) {
        if (!mask_kink_free(to_frame(sc.ego, wst), sc.ego_dims, mask, geom,
                            2e-5, 1e-3)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;

      auto objective = [&](const std::vector<Action>& acts) {
        const auto w = rollout(sc.ego, acts, {cfg.dt});
        std::vector<SelfState> rel;
        rel.reserve(w.size());
        for (const auto& st : w) rel.push_back(to_frame(sc.ego, st));
        return trajectory_cost(pred.frames, rel, acts, sc.ego_dims,
                               cfg.weights, mask, obj)
            .J;
      };
      std::vector<SelfState> rel;
      for (const auto& st : world) rel.push_back(to_frame(sc.ego, st));
      const TrajectoryCostGrad cg =
          trajectory_cost_vjp(pred.frames, rel, actions, sc.ego_dims,
                              cfg.weights, mask, obj, 1.0);
      std::vector<SelfStateAdjoint> world_cots(world.size());
      for (std::size_t k = 0; k < world.size(); ++k) {
        world_cots[k] = to_frame_vjp(sc.ego, cg.d_selves[k]);
      }
      auto [g0, grads] = rollout_vjp(sc.ego, actions, {cfg.dt}, world_cots);
      (void)g0;
      for (int k = 0; k < T; ++k) {
        grads[k].accel += cg.d_actions[k].accel;
        grads[k].turn += cg.d_actions[k].turn;
      }

      for (int probe = 0; probe < 10; ++probe) {
        const int k = static_cast<int>(rng.below(T));
        const int d = static_cast<int>(rng.below(2));
        const double analytic =
            flip("cost_chain") * (d == 0 ? grads[k].accel : grads[k].turn);
        auto f = [&](double v) {
          auto mod = actions;
          (d == 0 ? mod[k].accel : mod[k].turn) = v;
          return objective(mod);
        };
        const double x0 = d == 0 ? actions[k].accel : actions[k].turn;
        acc.worst = std::max(
            acc.worst, coord_err(f, x0, analytic, tol, objective(actions)));
      }
      ++acc.samples;
    }
    finish("cost_chain", acc, tol);
  }

  // 4. Coupled predictor adjoints w.r.t. the predicted ego states.
  {
    const double tol = 1e-5;
    SuiteAccum acc;
    Rng rng(mix_seed(opt.seed, 4));
    const ReactiveParams params = cfg.reactive;
    const int T = 6;
    while (acc.samples < n) {
      Scene sc = traffic_scene(rng.raw());
      if (sc.others.empty()) continue;
      std::vector<SelfState> pred_self(T);
      double x = sc.ego.x;
      for (int k = 0; k < T; ++k) {
        x += rng.uniform(0.5, 2.5);
        pred_self[k] = {x, sc.ego.y, 1.0, 0.0, rng.uniform(5.0, 25.0)};
      }
      // Keep the braking term off its relu/cap kinks.
      bool ok = true;
      {
        Scene cur = sc;
        for (int k = 0; k < T && ok; ++k) {
          for (auto& car : cur.others) {
            const double closing = car.state.s - pred_self[k].s;
            if (std::abs(closing) < 1e-3) ok = false;
            const double sig = 1.0 / (1.0 + std::exp(-(pred_self[k].x - car.state.x) /
                                                     params.scale));
            const double raw = params.gain * std::max(0.0, closing) * sig;
            if (std::abs(raw - params.brake_cap) < 1e-3) ok = false;
            car.state.x += car.state.s * cfg.dt;
            car.state.s -= std::min(raw, params.brake_cap) * cfg.dt;
          }
        }
      }
      if (!ok) continue;

      std::vector<std::vector<CarCotangent>> cots(
          T, std::vector<CarCotangent>(sc.others.size()));
      for (auto& per_step : cots) {
        for (auto& c : per_step) {
          c = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        }
      }
      auto scalar = [&](const std::vector<SelfState>& selves) {
        const EnvPrediction p =
            predict_coupled(sc, selves, params, cfg.dt, geom);
        double v = 0;
        for (int k = 0; k < T; ++k) {
          for (std::size_t c = 0; c < sc.others.size(); ++c) {
            const SelfState& st = p.scenes[k].others[c].state;
            v += cots[k][c].x * st.x + cots[k][c].y * st.y +
                 cots[k][c].s * st.s;
          }
        }
        return v;
      };
      double f_scale = 0;
      {
        const EnvPrediction p =
            predict_coupled(sc, pred_self, params, cfg.dt, geom);
        for (int k = 0; k < T; ++k) {
          for (std::size_t c = 0; c < sc.others.size(); ++c) {
            const SelfState& st = p.scenes[k].others[c].state;
            f_scale += std::abs(cots[k][c].x * st.x) +
                       std::abs(cots[k][c].y * st.y) +
                       std::abs(cots[k][c].s * st.s);
          }
        }
      }
      const auto g = predict_coupled_vjp(sc, pred_self, params, cfg.dt, cots);
      for (int k = 0; k < T; ++k) {
        for (int d = 0; d < 2; ++d) {
          const double analytic =
              flip("env_coupled") * (d == 0 ? g[k].x : g[k].s);
          auto f = [&](double v) {
            auto mod = pred_self;
            (d == 0 ? mod[k].x : mod[k].s) = v;
            return scalar(mod);
          };
          const double x0 = d == 0 ? pred_self[k].x : pred_self[k].s;
          acc.worst =
              std::max(acc.worst, coord_err(f, x0, analytic, tol, f_scale));
        }
      }
      ++acc.samples;
    }
    finish("env_coupled", acc, tol);
  }

  // 5. Policy objective gradient w.r.t. the policy parameters.
  {
    const double tol = 1e-4;
    SuiteAccum acc;
    Rng rng(mix_seed(opt.seed, 5));
    TrainConfig tcfg;
    tcfg.horizon = 10;
    tcfg.dt = cfg.dt;
    tcfg.discount = cfg.planner.discount;
    tcfg.weights = cfg.weights;
    tcfg.mask = mask;
    tcfg.raster = geom;
    tcfg.bounds = cfg.planner.bounds;
    while (acc.samples < n) {
      Scene sc = traffic_scene(rng.raw());
      PolicyParams params;
      for (auto& w : params.weights) w = rng.uniform(-0.004, 0.004);
      params.bias = {rng.uniform(-0.3, 0.3), rng.uniform(-0.02, 0.02)};
      PolicyGrad g;
      const double J = policy_objective(sc, params, tcfg, &g);
      if (!std::isfinite(J)) continue;

      for (int probe = 0; probe < 8; ++probe) {
        const std::size_t i = rng.below(params.weights.size() + 2);
        double analytic;
        auto f = [&](double v) {
          PolicyParams mod = params;
          if (i < params.weights.size()) {
            mod.weights[i] = v;
          } else {
            mod.bias[i - params.weights.size()] = v;
          }
          return policy_objective(sc, mod, tcfg);
        };
        double x0;
        if (i < params.weights.size()) {
          analytic = g.weights[i];
          x0 = params.weights[i];
        } else {
          analytic = g.bias[i - params.weights.size()];
          x0 = params.bias[i - params.weights.size()];
        }
        acc.worst = std::max(
            acc.worst, coord_err(f, x0, flip("policy") * analytic, tol, J));
      }
      ++acc.samples;
    }
    finish("policy", acc, tol);
  }

  return results;
}

bool all_pass(const std::vector<GradSuiteResult>& results) {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace egoplan
