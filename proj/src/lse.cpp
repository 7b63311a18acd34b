#include "xclr/lse.hpp"

#include <algorithm>
#include <cmath>

#include "xclr/error.hpp"

namespace xclr {

double lse_mean(std::span<const double> values, double tau) {
  require(!values.empty(), "lse_mean: empty sequence");
  require(tau > 0.0, "lse_mean: temperature must be positive");
  const double vmax = *std::max_element(values.begin(), values.end());
  double mean = 0.0;
  double shifted = 0.0;  // mean of expm1((v - max) / tau), keeps precision for large tau
  for (double v : values) {
    mean += v;
    shifted += std::expm1((v - vmax) / tau);
  }
  const double m = static_cast<double>(values.size());
  mean /= m;
  shifted /= m;
  const double result = vmax + tau * std::log1p(shifted);
  // Rounding can push the value a few ulps outside the Jensen sandwich.
  return std::clamp(result, std::min(mean, vmax), vmax);
}

std::vector<double> softmax(std::span<const double> values, double tau) {
  require(!values.empty(), "softmax: empty sequence");
  require(tau > 0.0, "softmax: temperature must be positive");
  const double vmax = *std::max_element(values.begin(), values.end());
  std::vector<double> w(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    w[i] = std::exp((values[i] - vmax) / tau);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace xclr
