#pragma once

#include <functional>
#include <string>

#include "cladnet/params.hpp"
#include "cladnet/tape.hpp"

namespace cladnet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares tape gradients of a scalar-valued build against central finite
// differences. `build` must be deterministic for fixed parameter values
// (seed any rng it uses internally per call). Relative error per entry is
// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
//
// Central differences only resolve gradients down to ulp(f)/eps, so entries
// whose absolute difference sits below `abs_floor` count as matched; without
// this, a parameter with an exactly-zero gradient (e.g. a pure per-feature
// rescaling the loss is invariant to) reports rel error ~1 on rounding noise.
GradCheckReport finite_difference_check(
    const std::function<Var(Tape&, ParameterStore&)>& build, ParameterStore& params,
    double eps = 1e-5, const std::vector<std::string>& param_names = {},
    double abs_floor = 1e-7);

}  // namespace cladnet
