#pragma once

#include <functional>
#include <string>

#include "xclr/array.hpp"

namespace xclr {

// A scalar objective together with its analytic gradient.
struct ValueAndGrad {
  double value = 0.0;
  ParameterSet grad;
};

using DifferentiableFn = std::function<ValueAndGrad(const ParameterSet&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the analytic gradient of fn at params against central differences with
// step eps (eps in [1e-7, 1e-3]). Per entry error is
// |analytic - numeric| / max(1, |analytic|, |numeric|); the maximum is returned.
GradCheckResult grad_check(const DifferentiableFn& fn, const ParameterSet& params, double eps);

// Value-only probe, used for the numeric side.
using ScalarFn = std::function<double(const ParameterSet&)>;
ParameterSet numeric_gradient(const ScalarFn& fn, const ParameterSet& params, double eps);

}  // namespace xclr
