#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egoplan/config.hpp"

namespace egoplan {

struct GradSuiteResult {
  std::string name;
  int samples = 0;
  double worst_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  int samples = 100;
  std::uint64_t seed = 0;
  // Test hook: names a suite whose analytic gradient gets one component
  // negated before comparison, to prove the checker catches sign errors.
  std::string inject_sign_flip;
};

/// Central-finite-difference verification of every analytic adjoint:
/// kinematics rollout, mask construction, the full cost chain over
/// actions, the coupled predictor, and the policy objective. Samples are
/// rejection-drawn away from clamp kinks; a coordinate that straddles a
/// kink at the widest step is retried at narrower steps.
std::vector<GradSuiteResult> run_gradcheck(const RunConfig& cfg,
                                           const GradcheckOptions& opt);

bool all_pass(const std::vector<GradSuiteResult>& results);

}  // namespace egoplan
