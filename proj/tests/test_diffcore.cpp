#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "xclr/adam.hpp"
#include "xclr/array.hpp"
#include "xclr/error.hpp"
#include "xclr/grad_check.hpp"
#include "xclr/lse.hpp"
#include "xclr/parallel.hpp"
#include "xclr/rng.hpp"

using namespace xclr;

namespace {

// Reference log-mean-exp in long double without any shifting; only valid for small |v|/tau.
double naive_lse_mean(const std::vector<double>& v, double tau) {
  long double s = 0.0L;
  for (double x : v) s += std::exp(static_cast<long double>(x) / tau);
  return static_cast<double>(tau * std::log(s / static_cast<long double>(v.size())));
}

ParameterSet scalar_param(double w) {
  ParameterSet p;
  p.add("w", Array({1}, std::vector<double>{w}));
  return p;
}

}  // namespace

TEST(Array, RejectsBadConstruction) {
  EXPECT_THROW(Array({2, 2}, std::vector<double>{1, 2, 3}), ContractError);
  EXPECT_THROW(Array({2}, std::vector<double>{1, NAN}), ContractError);
  EXPECT_THROW(Array({2, 0}), ContractError);
}

TEST(Array, IndexingAndGather) {
  Array a({2, 3, 2});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i);
  EXPECT_EQ(a(1, 2, 1), 11.0);
  EXPECT_EQ(a.row(1)[0], 6.0);
  const std::vector<std::size_t> idx{1, 1, 0};
  Array g = a.gather(idx);
  EXPECT_EQ(g.shape(), (Shape{3, 3, 2}));
  EXPECT_EQ(g(0, 0, 0), 6.0);
  EXPECT_EQ(g(2, 2, 1), 5.0);
}

TEST(ParameterSet, UniqueNamesAndScaledAdd) {
  ParameterSet p;
  p.add("a", Array({2}, 1.0));
  EXPECT_THROW(p.add("a", Array({2}, 1.0)), ContractError);
  p.add("b", Array({1, 3}, 2.0));
  EXPECT_EQ(p.total_size(), 5u);
  ParameterSet q = p.zeros_like();
  EXPECT_TRUE(q.same_layout(p));
  q.add_scaled(p, 0.5);
  EXPECT_EQ(q.get("b")[2], 1.0);
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_NE(a.next_u64(), c.next_u64());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng r(3);
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Adam, FreshStateDefaults) {
  const AdamState s = AdamState::fresh(scalar_param(0.0), 0.1);
  EXPECT_EQ(s.beta1, 0.9);
  EXPECT_EQ(s.beta2, 0.999);
  EXPECT_EQ(s.epsilon, 1e-8);
  EXPECT_EQ(s.step, 0u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m = 0.1, v = 0.001; corrected m = 1, v = 1; update = 0.1 * 1 / (1 + 1e-8).
  auto [p, s] = adam_step(scalar_param(0.0), scalar_param(1.0), AdamState::fresh(scalar_param(0.0), 0.1));
  EXPECT_NEAR(p.get("w")[0], -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, SecondStepMatchesHandFormula) {
  AdamState s = AdamState::fresh(scalar_param(0.0), 0.1);
  ParameterSet p = scalar_param(0.0);
  adam_update(p, scalar_param(1.0), s);
  adam_update(p, scalar_param(-2.0), s);
  const double m = 0.9 * 0.1 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 + 0.001 * 4.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double expect = -0.1 / (1.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8);
  EXPECT_NEAR(p.get("w")[0], expect, 1e-14);
}

TEST(Adam, ZeroGradientIsIdentityWithoutMomentum) {
  // Identity holds whenever the first moment is zero, whatever the step and second moment.
  ParameterSet p = scalar_param(2.5);
  AdamState s = AdamState::fresh(p, 0.1);
  s.step = 7;
  s.second_moment.get("w")[0] = 3.0;
  auto [q, s2] = adam_step(p, p.zeros_like(), s);
  EXPECT_EQ(q.get("w")[0], 2.5);
  EXPECT_EQ(s2.step, 8u);
}

TEST(Adam, DecayAppliesPerEpoch) {
  AdamState s = AdamState::fresh(scalar_param(0.0), 0.1, 0.5);
  s.epoch = 3;
  EXPECT_DOUBLE_EQ(s.learning_rate(), 0.0125);
}

TEST(Adam, RejectsMismatchAndNonFinite) {
  ParameterSet p = scalar_param(0.0);
  AdamState s = AdamState::fresh(p, 0.1);
  ParameterSet wrong;
  wrong.add("v", Array({1}, 0.0));
  EXPECT_THROW(adam_update(p, wrong, s), ContractError);
  ParameterSet bad = scalar_param(0.0);
  bad.get("w")[0] = INFINITY;
  try {
    adam_update(p, bad, s);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
  }
}

TEST(GradCheck, ExactQuadratic) {
  DifferentiableFn f = [](const ParameterSet& p) {
    const double w = p.get("w")[0];
    return ValueAndGrad{w * w, scalar_param(2 * w)};
  };
  EXPECT_LT(grad_check(f, scalar_param(3.0), 1e-5).max_rel_error, 1e-8);
}

TEST(GradCheck, ConstantFunction) {
  DifferentiableFn f = [](const ParameterSet& p) { return ValueAndGrad{4.0, p.zeros_like()}; };
  EXPECT_EQ(grad_check(f, scalar_param(1.0), 1e-5).max_rel_error, 0.0);
}

TEST(GradCheck, WrongGradientFlagged) {
  // Analytic 12 vs numeric 6: |12 - 6| / 12 = 0.5.
  DifferentiableFn f = [](const ParameterSet& p) {
    const double w = p.get("w")[0];
    return ValueAndGrad{w * w, scalar_param(4 * w)};
  };
  const auto r = grad_check(f, scalar_param(3.0), 1e-5);
  EXPECT_NEAR(r.max_rel_error, 0.5, 1e-8);
  EXPECT_EQ(r.worst_parameter, "w");
}

TEST(GradCheck, EpsilonRangeAndNonFiniteProbe) {
  DifferentiableFn f = [](const ParameterSet& p) { return ValueAndGrad{0.0, p.zeros_like()}; };
  EXPECT_THROW(grad_check(f, scalar_param(0.0), 1e-2), ContractError);
  ScalarFn g = [](const ParameterSet& p) { return p.get("w")[0] > 0 ? NAN : 0.0; };
  EXPECT_THROW(numeric_gradient(g, scalar_param(0.0), 1e-5), NumericError);
}

TEST(LseMean, HandValues) {
  // Exact value log((1 + e^0.0625) / 2) = 0.0317382; the rounded figure 0.0317423 is within 1e-5.
  const double two_level = lse_mean(std::vector<double>{0, 0, 0.0625, 0.0625}, 1.0);
  EXPECT_NEAR(two_level, std::log((1.0 + std::exp(0.0625)) / 2.0), 1e-15);
  EXPECT_NEAR(two_level, 0.0317423, 1e-5);
  EXPECT_NEAR(lse_mean(std::vector<double>{0, 0, 0.0625, 0.0625}, 1.0),
              naive_lse_mean({0, 0, 0.0625, 0.0625}, 1.0), 1e-15);
  const double big = lse_mean(std::vector<double>{0, 1e5}, 0.01);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 1e5 - 0.01 * std::log(2.0), 1e-9);
  EXPECT_THROW(lse_mean(std::vector<double>{}, 1.0), ContractError);
  EXPECT_THROW(lse_mean(std::vector<double>{1.0}, 0.0), ContractError);
}

TEST(LseMean, ConstantInput) {
  for (double tau : {1e-3, 1.0, 1e3}) EXPECT_EQ(lse_mean(std::vector<double>(5, 0.7), tau), 0.7);
}

TEST(LseMean, BoundsAndMonotonicityInTau) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(12);
    for (double& x : v) x = rng.uniform(-3.0, 3.0);
    const double mx = *std::max_element(v.begin(), v.end());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double prev = INFINITY;
    for (double tau : {1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3}) {
      const double l = lse_mean(v, tau);
      EXPECT_GE(l, mean - 1e-12);
      EXPECT_LE(l, mx + 1e-12);
      EXPECT_LE(l, prev + 1e-12);
      prev = l;
      if (tau >= 0.1) EXPECT_NEAR(l, naive_lse_mean(v, tau), 1e-12);
    }
    EXPECT_NEAR(lse_mean(v, 1e-4), mx, 1e-3);
  }
}

TEST(Softmax, SumsToOneAndMatchesGradient) {
  const std::vector<double> v{0.3, -1.0, 2.0, 0.5};
  const double tau = 0.7;
  const auto w = softmax(v, tau);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
  // d lse_mean / d v_k = softmax_k.
  for (std::size_t k = 0; k < v.size(); ++k) {
    auto up = v, dn = v;
    up[k] += 1e-6;
    dn[k] -= 1e-6;
    EXPECT_NEAR((lse_mean(up, tau) - lse_mean(dn, tau)) / 2e-6, w[k], 1e-8);
  }
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
  std::vector<double> a(1000), b(1000);
  set_thread_count(1);
  parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
  set_thread_count(4);
  parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
  set_thread_count(0);
  EXPECT_EQ(a, b);
}

TEST(Parallel, PropagatesExceptions) {
  set_thread_count(3);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
  set_thread_count(0);
}
