#include "xclr/adam.hpp"

#include <cmath>

#include "xclr/error.hpp"

namespace xclr {

AdamState AdamState::fresh(const ParameterSet& params, double base_lr, double decay) {
  require(base_lr > 0.0, "Adam learning rate must be positive");
  require(decay > 0.0 && decay <= 1.0, "Adam decay must lie in (0, 1]");
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.base_lr = base_lr;
  s.decay = decay;
  return s;
}

double AdamState::learning_rate() const {
  return base_lr * std::pow(decay, static_cast<double>(epoch));
}

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& state) {
  require(grads.same_layout(params), "adam_step: gradient layout does not match parameters");
  require(state.first_moment.same_layout(params) && state.second_moment.same_layout(params),
          "adam_step: optimizer state layout does not match parameters");
  for (const auto& g : grads) {
    for (std::size_t k = 0; k < g.value.size(); ++k) {
      if (!std::isfinite(g.value[k]))
        throw NumericError("adam_step: non-finite gradient in parameter '" + g.name +
                           "' at flat index " + std::to_string(k));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double lr = state.learning_rate();

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].value.values();
    auto g = grads[p].value.values();
    auto m = state.first_moment[p].value.values();
    auto v = state.second_moment[p].value.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

std::pair<ParameterSet, AdamState> adam_step(ParameterSet params, const ParameterSet& grads,
                                             AdamState state) {
  adam_update(params, grads, state);
  return {std::move(params), std::move(state)};
}

}  // namespace xclr
