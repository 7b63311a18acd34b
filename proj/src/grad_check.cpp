#include "xclr/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "xclr/error.hpp"

namespace xclr {

ParameterSet numeric_gradient(const ScalarFn& fn, const ParameterSet& params, double eps) {
  require(eps >= 1e-7 && eps <= 1e-3, "grad_check: eps must lie in [1e-7, 1e-3]");
  ParameterSet probe = params;
  ParameterSet out = params.zeros_like();
  for (std::size_t p = 0; p < probe.size(); ++p) {
    auto w = probe[p].value.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      w[k] = orig + eps;
      const double up = fn(probe);
      w[k] = orig - eps;
      const double down = fn(probe);
      w[k] = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: non-finite loss when perturbing '" + probe[p].name +
                           "' at flat index " + std::to_string(k));
      out[p].value[k] = (up - down) / (2.0 * eps);
    }
  }
  return out;
}

GradCheckResult grad_check(const DifferentiableFn& fn, const ParameterSet& params, double eps) {
  const ValueAndGrad analytic = fn(params);
  require(analytic.grad.same_layout(params), "grad_check: analytic gradient layout mismatch");
  const ParameterSet numeric =
      numeric_gradient([&](const ParameterSet& p) { return fn(p).value; }, params, eps);

  GradCheckResult r;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto a = analytic.grad[p].value.values();
    const auto n = numeric[p].value.values();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double err =
          std::abs(a[k] - n[k]) / std::max({1.0, std::abs(a[k]), std::abs(n[k])});
      if (err > r.max_rel_error || (p == 0 && k == 0)) {
        r.max_rel_error = err;
        r.worst_parameter = params[p].name;
        r.worst_index = k;
        r.analytic = a[k];
        r.numeric = n[k];
      }
    }
  }
  return r;
}

}  // namespace xclr
