#pragma once

#include <cstdint>
#include <utility>

#include "xclr/array.hpp"

namespace xclr {

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::uint64_t step = 0;
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double decay = 0.99;  // per-epoch exponential learning-rate decay
  double epsilon = 1e-8;
  std::uint64_t epoch = 0;  // set by the caller; lr = base_lr * decay^epoch

  // Zeroed accumulators shaped like params, with the default moment coefficients.
  static AdamState fresh(const ParameterSet& params, double base_lr, double decay = 0.99);

  double learning_rate() const;
};

// One Adam update with bias correction. Throws ContractError on layout mismatch and
// NumericError naming the parameter when a gradient entry is non-finite.
std::pair<ParameterSet, AdamState> adam_step(ParameterSet params, const ParameterSet& grads,
                                             AdamState state);

// In-place form used by the training loop.
void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& state);

}  // namespace xclr
