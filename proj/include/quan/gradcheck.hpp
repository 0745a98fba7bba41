#pragma once

#include <functional>
#include <string>
#include <vector>

#include "quan/autodiff.hpp"

namespace quan {

struct GradCheckReport {
  std::string parameter;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double perturbation = 1e-6;  // must lie in [1e-7, 1e-4]
  double tolerance = 1e-4;
};

/// Scalar loss built on a fresh tape from the parameters in the store.
using LossBuilder = std::function<Var(Tape<double>&)>;

/// Compares reverse-mode gradients of every trainable parameter against
/// central finite differences of the scalar loss. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-12). The builder must be
/// deterministic; two evaluations at the same point that differ raise.
std::vector<GradCheckReport> gradient_check(ParameterStore<double>& params, const LossBuilder& loss,
                                            const GradCheckOptions& options = {});

bool all_pass(const std::vector<GradCheckReport>& reports);

}  // namespace quan
