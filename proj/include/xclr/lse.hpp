#pragma once

#include <span>
#include <vector>

namespace xclr {

// tau * log((1/M) * sum_i exp(v_i / tau)), max-shifted so that no exponential overflows.
// The result always lies in [mean(v), max(v)].
double lse_mean(std::span<const double> values, double tau);

// exp(v_i / tau) / sum_j exp(v_j / tau), max-shifted; the gradient of lse_mean.
std::vector<double> softmax(std::span<const double> values, double tau);

}  // namespace xclr
