#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mind/losses.hpp"
#include "mind/types.hpp"

namespace mind {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Test hook: lets the harness-sensitivity tests prove that an injected bug
// is actually caught. Production callers leave it default.
struct FaultInjection {
  bool hsic_sign_flip = false;
};

struct GradCheck {
  double max_err = 0;       // |analytic - numeric| / max(1, |a|, |n|)
  std::size_t entries = 0;  // how many parameter entries were probed
};

// Central finite differences against the reverse-mode gradients.
// loss_value() must rebuild the graph from the Variables' current values;
// compute_grads() must zero-grad, rebuild, and run backward.
GradCheck finite_difference_check(std::span<Variable* const> vars,
                                  const std::function<double()>& loss_value,
                                  const std::function<void()>& compute_grads,
                                  std::size_t samples_per_var,
                                  std::uint64_t pick_seed, double step = 1e-5);

// Independent brute-force oracle: explicit Gram/centering construction with
// plain loops, sharing no code with the tensor engine.
double hsic_bruteforce(const Matrix& r1, const Matrix& r2);

enum class LossTerm { Task, Np, Info, Cons, Diff, Recon, Cyr };
const char* loss_term_name(LossTerm t);

// One finite-difference audit of a single loss term on a small random
// model/batch draw; used by the release checks and the acceptance suite.
GradCheck check_loss_gradients(LossTerm term, std::uint64_t draw_seed,
                               std::size_t samples_per_var = 3);

// The full release gate: gradient checks for every loss, oracle
// comparisons, estimator bound, GRL contracts; >= 10 named checks.
std::vector<CheckResult> run_verification(const FaultInjection& fault = {});

std::string format_check_table(const std::vector<CheckResult>& checks);

}  // namespace mind
