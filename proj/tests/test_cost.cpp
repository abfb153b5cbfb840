#include <cmath>

#include <stdexcept>

#include "doctest.h"
#include "egoplan/cost.hpp"
#include "egoplan/envmodel.hpp"
#include "support/finite_diff.hpp"

using namespace egoplan;
using namespace egoplan::testing;

namespace {

const RasterGeometry kGeom{};
const MaskConfig kMask{};
const VehicleDims kDims{2.0, 4.8};

RasterFrame blank_frame() {
  RasterFrame f;
  f.lanes = Grid(kGeom.height_cells, kGeom.width_cells);
  f.cars = Grid(kGeom.height_cells, kGeom.width_cells);
  f.offroad = Grid(kGeom.height_cells, kGeom.width_cells);
  f.geom = kGeom;
  return f;
}

Scene scene_with_lead(double gap) {
  Scene sc;
  sc.ego = {0, 0, 1, 0, 15};
  sc.ego_dims = kDims;
  sc.lanes = make_lanes(3, 3.7);
  sc.others.push_back({1, SelfState{gap, 0, 1, 0, 10}, kDims});
  return sc;
}

}  // namespace

TEST_CASE("all-zero frame: only the destination term is nonzero") {
  const RasterFrame f = blank_frame();
  SelfState rel;
  rel.x = 3.25;
  rel.s = 12.0;
  const StepCost c = step_cost(f, rel, kDims, CostWeights{}, kMask);
  CHECK(c.proximity == 0.0);
  CHECK(c.lane == 0.0);
  CHECK(c.offroad == 0.0);
  CHECK(c.destination == -3.25);
}

TEST_CASE("single car cell at the mask corner contributes exactly 1") {
  // Choose a cell center and size the car so that the cell sits at the
  // rectangle corner offset (l/2, w/2) exactly.
  const int ci = 70, cj = 14;
  const Vec2 a = mesh_coord(kGeom, ci, cj);
  REQUIRE(a.x > 0);
  REQUIRE(a.y > 0);
  const VehicleDims dims{2 * a.y, 2 * a.x};

  RasterFrame f = blank_frame();
  f.cars.at(ci, cj) = 1.0;
  SelfState rel;  // identity pose at the frame center
  rel.s = 0.0;
  CostWeights w;
  w.proximity = 1.0;
  w.lane = w.offroad = w.jerk = w.destination = 0.0;
  const StepCost c = step_cost(f, rel, dims, w, kMask);
  CHECK(c.proximity == 1.0);
  CHECK(c.total == 1.0);
}

TEST_CASE("step-cost VJP matches finite differences") {
  Scene sc = scene_with_lead(12.0);
  const RasterFrame f = rasterize(sc, kGeom);
  CostWeights w;  // defaults exercise every component

  Rng rng(33);
  int accepted = 0;
  while (accepted < 20) {
    SelfState rel;
    const double angle = rng.uniform(-0.2, 0.2);
    rel.x = rng.uniform(-5.0, 5.0);
    rel.y = rng.uniform(-2.0, 2.0);
    rel.ux = std::cos(angle);
    rel.uy = std::sin(angle);
    rel.s = rng.uniform(4.0, 9.0);
    // Keep clear of the speed-floor kink and mask clamp boundaries. The
    // fd step shifts cell offsets by at most ~5e-5 m here.
    bool ok = std::abs(rel.s - kMask.speed_floor) > 1e-2;
    const double d_x = mask_reach_x(rel, kDims, kMask);
    const double d_y = kDims.width / 2 + kMask.lane_pad;
    for (int i = 0; ok && i < kGeom.height_cells; ++i) {
      for (int j = 0; ok && j < kGeom.width_cells; ++j) {
        const Vec2 b = to_body(mesh_coord(kGeom, i, j) - rel.pos(), rel.heading());
        if (std::abs(b.x) < 2e-4 || std::abs(b.y) < 2e-4 ||
            std::abs(std::abs(b.x) - d_x) < 2e-4 ||
            std::abs(std::abs(b.y) - d_y) < 2e-4 ||
            std::abs(std::abs(b.y) - kDims.width / 2) < 2e-4) {
          ok = false;
        }
      }
    }
    if (!ok) continue;
    ++accepted;

    const SelfStateAdjoint g = step_cost_vjp(f, rel, kDims, w, kMask, 1.0);
    auto scalar = [&](const SelfState& st) {
      return step_cost(f, st, kDims, w, kMask).total;
    };
    const std::vector<double> analytic = flatten(g);
    std::vector<double> numeric(5);
    const std::vector<double> base = flatten(rel);
    for (int d = 0; d < 5; ++d) {
      auto hi = base, lo = base;
      hi[d] += kFdStep;
      lo[d] -= kFdStep;
      numeric[d] = (scalar(unflatten(hi)) - scalar(unflatten(lo))) / (2 * kFdStep);
    }
    CHECK(max_rel_err(analytic, numeric, fd_noise_floor(scalar(rel))) <= 1e-5);
  }
}

TEST_CASE("jerk of a constant action sequence is zero") {
  const std::vector<Action> actions(7, Action{2.0, -0.5});
  CHECK(jerk_cost(actions) == 0.0);
  const std::vector<Action> one(1, Action{4.0, 1.0});
  CHECK(jerk_cost(one) == 0.0);
}

TEST_CASE("jerk T=2 with a unit accel jump is one half") {
  const std::vector<Action> actions{{0, 0}, {1, 0}};
  CHECK(jerk_cost(actions) == 0.5);
}

TEST_CASE("jerk gradient is near-exact against finite differences") {
  // The jerk is quadratic, so central differences are exact for any step;
  // a wide step keeps the roundoff floor far below the 1e-8 target.
  const double h = 1e-4;
  Rng rng(14);
  std::vector<Action> actions(9);
  for (auto& a : actions) a = random_action(rng);
  const std::vector<Action> g = jerk_cost_vjp(actions, 1.0);
  for (std::size_t k = 0; k < actions.size(); ++k) {
    for (int dim = 0; dim < 2; ++dim) {
      auto mod = actions;
      double* field = dim == 0 ? &mod[k].accel : &mod[k].turn;
      const double base = *field;
      *field = base + h;
      const double hi = jerk_cost(mod);
      *field = base - h;
      const double lo = jerk_cost(mod);
      const double fd = (hi - lo) / (2 * h);
      const double analytic = dim == 0 ? g[k].accel : g[k].turn;
      CHECK(rel_err(analytic, fd, fd_noise_floor(1.0, h)) <= 1e-8);
    }
  }
}

TEST_CASE("discounted objective: unit step totals at gamma=0.99, T=2") {
  // Frames/weights engineered so each step total is exactly 1.
  const int ci = 70, cj = 14;
  const Vec2 a = mesh_coord(kGeom, ci, cj);
  const VehicleDims dims{2 * a.y, 2 * a.x};
  RasterFrame f = blank_frame();
  f.cars.at(ci, cj) = 1.0;
  CostWeights w;
  w.proximity = 1.0;
  w.lane = w.offroad = w.jerk = w.destination = 0.0;

  const std::vector<RasterFrame> frames{f, f};
  std::vector<SelfState> rels(2);
  rels[0].s = rels[1].s = 0.0;
  const std::vector<Action> actions(2);
  const TrajectoryCost tc =
      trajectory_cost(frames, rels, actions, dims, w, kMask, {0.99, 2});
  CHECK(tc.steps[0].total == 1.0);
  CHECK(tc.steps[1].total == 1.0);
  CHECK(tc.J == 1.9701);  // 0.99 + 0.99^2, exact in double arithmetic
}

TEST_CASE("gamma=1 with everything zero gives J = 0") {
  const RasterFrame f = blank_frame();
  const std::vector<RasterFrame> frames{f};
  const std::vector<SelfState> rels(1);  // x = 0 -> destination 0
  const std::vector<Action> actions(1);
  const TrajectoryCost tc = trajectory_cost(frames, rels, actions, kDims,
                                            CostWeights{}, kMask, {1.0, 1});
  CHECK(tc.J == 0.0);
}

TEST_CASE("length mismatch is rejected") {
  const RasterFrame f = blank_frame();
  const std::vector<RasterFrame> frames{f, f};
  const std::vector<SelfState> rels(1);
  const std::vector<Action> actions(2);
  CHECK_THROWS_AS(trajectory_cost(frames, rels, actions, kDims, CostWeights{},
                                  kMask, {0.99, 2}),
                  std::invalid_argument);
}

TEST_CASE("channel linearity: scaling channels scales the inner products") {
  Scene sc = scene_with_lead(9.0);
  RasterFrame f = rasterize(sc, kGeom);
  SelfState rel;
  rel.s = 13.0;
  const StepCost base = step_cost(f, rel, kDims, CostWeights{}, kMask);
  for (double c : {0.5, 0.25, 2.0}) {  // powers of two scale exactly
    RasterFrame scaled = f;
    for (auto* grid : {&scaled.cars, &scaled.lanes, &scaled.offroad}) {
      for (double& v : grid->data) v *= c;
    }
    const StepCost sc2 = step_cost(scaled, rel, kDims, CostWeights{}, kMask);
    CHECK(sc2.proximity == c * base.proximity);
    CHECK(sc2.lane == c * base.lane);
    CHECK(sc2.offroad == c * base.offroad);
  }
}

TEST_CASE("breakdown total reconstruction is exact") {
  Scene sc = scene_with_lead(10.0);
  const RasterFrame f = rasterize(sc, kGeom);
  SelfState rel;
  rel.x = 1.0;
  rel.s = 14.0;
  CostWeights w;
  const StepCost c = step_cost(f, rel, kDims, w, kMask);
  CHECK(c.total == weighted_total(c, w));
}

TEST_CASE("nonnegative components, destination may go negative") {
  Scene sc = scene_with_lead(7.0);
  const RasterFrame f = rasterize(sc, kGeom);
  SelfState rel;
  rel.x = 2.0;
  rel.s = 11.0;
  const StepCost c = step_cost(f, rel, kDims, CostWeights{}, kMask);
  CHECK(c.proximity >= 0.0);
  CHECK(c.lane >= 0.0);
  CHECK(c.offroad >= 0.0);
  CHECK(c.destination < 0.0);
}

// The full differentiable chain: actions -> kinematics rollout -> frame
// transform -> masks -> discounted objective, checked against finite
// differences over the actions.
TEST_CASE("end-to-end action gradient matches finite differences") {
  Scene sc = scene_with_lead(18.0);
  const int T = 10;
  const StepParams dt{0.1};
  const ObjectiveConfig obj{0.99, T};
  const CostWeights w;  // full default weights
  const SelfState anchor = sc.ego;

  EnvPrediction pred = predict_decoupled(sc, T, dt.dt, kGeom);

  auto objective = [&](const std::vector<Action>& actions) {
    const auto world = rollout(sc.ego, actions, dt);
    std::vector<SelfState> rel;
    rel.reserve(world.size());
    for (const auto& st : world) rel.push_back(to_frame(anchor, st));
    return trajectory_cost(pred.frames, rel, actions, sc.ego_dims, w, kMask, obj).J;
  };

  auto gradient = [&](const std::vector<Action>& actions) {
    const auto world = rollout(sc.ego, actions, dt);
    std::vector<SelfState> rel;
    rel.reserve(world.size());
    for (const auto& st : world) rel.push_back(to_frame(anchor, st));
    const TrajectoryCostGrad cg = trajectory_cost_vjp(
        pred.frames, rel, actions, sc.ego_dims, w, kMask, obj, 1.0);
    std::vector<SelfStateAdjoint> world_cots(world.size());
    for (std::size_t k = 0; k < world.size(); ++k) {
      world_cots[k] = to_frame_vjp(anchor, cg.d_selves[k]);
    }
    auto [g0, g] = rollout_vjp(sc.ego, actions, dt, world_cots);
    (void)g0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k].accel += cg.d_actions[k].accel;
      g[k].turn += cg.d_actions[k].turn;
    }
    return g;
  };

  Rng rng(55);
  int accepted = 0;
  int attempts = 0;
  while (accepted < 8 && attempts < 200) {
    ++attempts;
    std::vector<Action> actions(T);
    for (auto& a : actions) {
      a = {rng.uniform(-1.5, 1.5), rng.uniform(-0.2, 0.2)};
    }
    // Keep every step's pose away from mask kinks. Under action
    // perturbations of 1e-6 the body-frame offsets move by under 2e-6 m,
    // so a 1e-5 margin suffices; with ten poses per chain a wider margin
    // would reject nearly every sample.
    const auto world = rollout(sc.ego, actions, dt);
    bool ok = true;
    for (const auto& wst : world) {
      const SelfState rel = to_frame(anchor, wst);
      if (std::abs(rel.s - kMask.speed_floor) < 1e-3) ok = false;
      const double d_x = mask_reach_x(rel, sc.ego_dims, kMask);
      const double d_y = sc.ego_dims.width / 2 + kMask.lane_pad;
      for (int i = 0; ok && i < kGeom.height_cells; ++i) {
        for (int j = 0; ok && j < kGeom.width_cells; ++j) {
          const Vec2 b =
              to_body(mesh_coord(kGeom, i, j) - rel.pos(), rel.heading());
          if (std::abs(b.x) < 1e-5 || std::abs(b.y) < 1e-5 ||
              std::abs(std::abs(b.x) - d_x) < 1e-5 ||
              std::abs(std::abs(b.y) - d_y) < 1e-5 ||
              std::abs(std::abs(b.y) - sc.ego_dims.width / 2) < 1e-5) {
            ok = false;
          }
        }
      }
      if (!ok) break;
    }
    if (!ok) continue;
    ++accepted;

    const std::vector<Action> analytic_g = gradient(actions);
    std::vector<double> analytic, numeric;
    for (int k = 0; k < T; ++k) {
      for (int dim = 0; dim < 2; ++dim) {
        auto mod = actions;
        double* field = dim == 0 ? &mod[k].accel : &mod[k].turn;
        const double base = *field;
        *field = base + kFdStep;
        const double hi = objective(mod);
        *field = base - kFdStep;
        const double lo = objective(mod);
        numeric.push_back((hi - lo) / (2 * kFdStep));
        analytic.push_back(dim == 0 ? analytic_g[k].accel : analytic_g[k].turn);
      }
    }
    CHECK(max_rel_err(analytic, numeric, fd_noise_floor(objective(actions))) <=
          1e-4);
  }
  CHECK(accepted == 8);
}
