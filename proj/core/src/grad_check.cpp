#include "cladnet/grad_check.hpp"

#include <cmath>

namespace cladnet {

GradCheckReport finite_difference_check(
    const std::function<Var(Tape&, ParameterStore&)>& build, ParameterStore& params, double eps,
    const std::vector<std::string>& param_names, double abs_floor) {
  if (eps < 1e-7 || eps > 1e-3) {
    throw NumericError("finite_difference_check: eps must be in [1e-7, 1e-3]");
  }

  auto eval = [&]() -> double {
    Tape tape;
    Var loss = build(tape, params);
    const double v = loss.value().scalar_value();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite loss");
    return v;
  };

  Tape tape;
  Var loss = build(tape, params);
  if (!loss.value().all_finite()) {
    throw NumericError("finite_difference_check: non-finite loss");
  }
  Gradients grads = tape.backward(loss);

  const std::vector<std::string>& names = param_names.empty() ? params.names() : param_names;
  GradCheckReport report;
  for (const auto& name : names) {
    Tensor& value = params.at(name);
    const Tensor* analytic = grads.find_param(name);
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value.at_flat(i);
      value.at_flat(i) = saved + eps;
      const double up = eval();
      value.at_flat(i) = saved - eps;
      const double down = eval();
      value.at_flat(i) = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic ? analytic->at_flat(i) : 0.0;
      const double diff = std::abs(a - numeric);
      const double rel = diff <= abs_floor ? 0.0 : diff / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

}  // namespace cladnet
