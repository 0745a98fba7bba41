#include "quan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace quan {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape<double> tape;
  return tape.value(loss(tape))[0];
}

}  // namespace

std::vector<GradCheckReport> gradient_check(ParameterStore<double>& params, const LossBuilder& loss,
                                            const GradCheckOptions& options) {
  const double h = options.perturbation;
  if (!(h >= 1e-7 && h <= 1e-4))
    throw ConfigError("gradient_check: perturbation must lie in [1e-7, 1e-4]");

  params.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  const double base = evaluate(loss);
  if (evaluate(loss) != base)
    throw Error("gradient_check: forward pass is non-deterministic; fix the random seed");

  std::vector<GradCheckReport> reports;
  for (auto& p : params) {
    if (!p.trainable) continue;
    GradCheckReport rep{p.name, 0.0, options.tolerance, true};
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = evaluate(loss);
      p.value[i] = orig - h;
      const double down = evaluate(loss);
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      rep.max_relative_error = std::max(rep.max_relative_error, std::abs(analytic - numeric) / denom);
    }
    rep.pass = rep.max_relative_error <= rep.tolerance;
    reports.push_back(rep);
  }
  return reports;
}

bool all_pass(const std::vector<GradCheckReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
}

}  // namespace quan
