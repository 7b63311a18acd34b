#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "xclr/error.hpp"
#include "xclr/geometry.hpp"
#include "xclr/losses.hpp"
#include "xclr/rng.hpp"

using namespace xclr;

namespace {

Array random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  Array a = Array::matrix(n, d);
  for (double& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

// DistanceMatrix with prescribed raw values; only usable for the loss value and grad_distances.
DistanceMatrix fixed_distances(const Array& d) {
  DistanceMatrix m;
  m.values = d;
  m.raw = d;
  m.embeddings = Array::matrix(d.rows(), 1);
  return m;
}

Array sym2(double a) { return Array::from_rows({{0, a}, {a, 0}}); }
Array sim2(double s) { return Array::from_rows({{1, s}, {s, 1}}); }

using LossFn = std::function<LossOutput(const DistanceMatrix&)>;

// Central-difference check of grad_embeddings through pairwise_distances.
double embedding_grad_error(const LossFn& loss, const Array& e, bool normalize) {
  const LossOutput out = loss(pairwise_distances(e, normalize));
  double worst = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    Array up = e, dn = e;
    up[k] += 1e-6;
    dn[k] -= 1e-6;
    const double num =
        (loss(pairwise_distances(up, normalize)).value - loss(pairwise_distances(dn, normalize)).value) / 2e-6;
    const double a = out.grad_embeddings[k];
    worst = std::max(worst, std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)}));
  }
  return worst;
}

double quad_component(double s, double margin, double d) {
  const double r = (1 - s) * margin - d;
  return r * r;
}

}  // namespace

TEST(PairLoss, HandValues) {
  EXPECT_DOUBLE_EQ(pair_loss(fixed_distances(sym2(1.0)), sim2(0.0), 1.0).value, 0.0);
  EXPECT_NEAR(pair_loss(fixed_distances(sym2(0.3)), sim2(0.5), 1.0).value, 0.1025, 1e-15);
}

TEST(PairLoss, UnitSimilarityReducesToSquaredDistances) {
  const Array d = pairwise_distances(random_matrix(5, 3, 1), false).values;
  const Array ones = Array::matrix(5, 5, 1.0);
  double expect = 0.0;
  for (double v : d.values()) expect += v * v / 25.0;
  EXPECT_NEAR(pair_loss(fixed_distances(d), ones, 0.7).value, expect, 1e-14);
  EXPECT_NEAR(quad_loss(fixed_distances(d), ones, 0.7).value, expect, 1e-14);
}

TEST(QuadLoss, HandValues) {
  EXPECT_NEAR(quad_loss(fixed_distances(sym2(1.0)), sim2(0.25), 1.0).value, 0.03125, 1e-15);
}

TEST(QuadLoss, ZeroAtExactTargets) {
  const Array s = similarity_matrix(random_matrix(6, 2, 3), SimilaritySpec::quadratic());
  Array d = Array::matrix(6, 6);
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = (1 - s[k]) * 1.5;
  EXPECT_NEAR(quad_loss(fixed_distances(d), s, 1.5).value, 0.0, 1e-30);
}

TEST(ExpClr, HandValueAndLimits) {
  // Components 0, 0, 0.0625, 0.0625 from D = 0.75 at s = 0.5, margin 1: (0.5 - 0.75)^2.
  const auto d = fixed_distances(sym2(0.75));
  EXPECT_NEAR(expclr_loss(d, sim2(0.5), {1.0, 1.0}).value, std::log((1 + std::exp(0.0625)) / 2), 1e-15);
  EXPECT_NEAR(expclr_loss(d, sim2(0.5), {1.0, 1e-3}).value, 0.0625, 1e-3);
  // Equal components.
  const auto eq = fixed_distances(Array::matrix(3, 3, 0.0));
  EXPECT_NEAR(expclr_loss(eq, Array::matrix(3, 3, 0.6), {2.0, 0.3}).value, 0.64, 1e-15);
}

TEST(ExpClr, SandwichAndTauLimits) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = pairwise_distances(random_matrix(5, 3, seed), true);
    const Array s = similarity_matrix(random_matrix(5, 2, seed + 50), SimilaritySpec::quadratic());
    const double quad = quad_loss(d, s, 1.0).value;
    const Array comp = quad_loss(d, s, 1.0).components;
    const double mx = *std::max_element(comp.values().begin(), comp.values().end());
    double prev_gap = INFINITY;
    for (double tau : {1.0, 0.1, 0.01, 0.001}) {
      const double v = expclr_loss(d, s, {1.0, tau}).value;
      EXPECT_GE(v, quad - 1e-14);
      EXPECT_LE(v, mx + 1e-14);
      EXPECT_LE(mx - v, prev_gap + 1e-14);
      prev_gap = mx - v;
    }
    // tau * (value - quad) is bounded by range^2 / 8 for every tau.
    double range_lo = *std::min_element(comp.values().begin(), comp.values().end());
    const double c_bound = (mx - range_lo) * (mx - range_lo) / 8.0;
    for (double tau : {10.0, 100.0, 1000.0})
      EXPECT_LE(tau * (expclr_loss(d, s, {1.0, tau}).value - quad), c_bound + 1e-12);
  }
}

TEST(SoftmaxWeights, Properties) {
  const Array uniform = Array::matrix(3, 3, 0.4);
  const Array wu = softmax_weights(uniform, 0.5);
  for (double w : wu.values()) EXPECT_NEAR(w, 1.0 / 9.0, 1e-15);

  Array dom = Array::matrix(2, 2, 0.0);
  dom(0, 1) = 20.0 * 0.3;
  EXPECT_GE(softmax_weights(dom, 0.3)(0, 1), 1 - 1e-8);

  const Array c = random_matrix(4, 4, 9, 0, 2);
  const Array w = softmax_weights(c, 0.7);
  double total = 0.0;
  for (double v : w.values()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  Array shifted = c;
  for (double& v : shifted.values()) v += 5.0;
  const Array ws = softmax_weights(shifted, 0.7);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(ws[k], w[k], 1e-14);
}

TEST(SoftmaxWeights, EqualExpClrGradientInComponents) {
  // On a 3x3 instance, d expclr / d D_ij = w_ij * d L_ij / d D_ij.
  const Array e = random_matrix(3, 2, 21);
  const Array s = similarity_matrix(random_matrix(3, 2, 22), SimilaritySpec::linear());
  const auto d = pairwise_distances(e, false);
  const MarginSpec spec{1.0, 0.4};
  const auto out = expclr_loss(d, s, spec);
  const Array w = softmax_weights(out.components, spec.temperature);
  for (std::size_t k = 0; k < 9; ++k) {
    DistanceMatrix up = d, dn = d;
    up.values[k] += 1e-6;
    dn.values[k] -= 1e-6;
    const double num = (expclr_loss(up, s, spec).value - expclr_loss(dn, s, spec).value) / 2e-6;
    const double dl = -2.0 * ((1 - s[k]) - d.values[k]);
    EXPECT_NEAR(num, w[k] * dl, 1e-8);
    EXPECT_NEAR(out.grad_distances[k], num, 1e-8);
  }
}

TEST(Gradients, AllPairLossesThroughDistances) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 3 + seed % 4;
    const Array e = random_matrix(n, 1 + seed % 4, seed);
    const Array f = random_matrix(n, 2, seed + 200);
    const Array s = similarity_matrix(f, SimilaritySpec::quadratic());
    const std::vector<LossFn> losses{
        [&](const DistanceMatrix& d) { return pair_loss(d, s, 1.0); },
        [&](const DistanceMatrix& d) { return quad_loss(d, s, 1.0); },
        [&](const DistanceMatrix& d) { return expclr_loss(d, s, {1.0, 0.5}); },
        [&](const DistanceMatrix& d) { return binned_pair_loss(d, f, 2, 1.0); }};
    for (const auto& l : losses)
      for (bool normalize : {false, true}) EXPECT_LT(embedding_grad_error(l, e, normalize), 1e-5);
  }
}

TEST(MseDecode, HandValuesAndGradients) {
  const LinearMap id{Array::from_rows({{1.0}}), {0.0}};
  const auto out = mse_decode_loss(Array::from_rows({{0}, {1}}), Array::from_rows({{0}, {2}}), id);
  EXPECT_DOUBLE_EQ(out.loss.value, 0.5);
  EXPECT_EQ(out.loss.components.shape(), (Shape{2, 1}));

  const Array e = random_matrix(4, 3, 5), f = random_matrix(4, 2, 6);
  LinearMap m{random_matrix(2, 3, 7), {0.1, -0.2}};
  const auto g = mse_decode_loss(e, f, m);
  auto value = [&](const Array& ee, const LinearMap& mm) { return mse_decode_loss(ee, f, mm).loss.value; };
  for (std::size_t k = 0; k < e.size(); ++k) {
    Array up = e, dn = e;
    up[k] += 1e-6;
    dn[k] -= 1e-6;
    EXPECT_NEAR(g.loss.grad_embeddings[k], (value(up, m) - value(dn, m)) / 2e-6, 1e-8);
  }
  for (std::size_t k = 0; k < m.weight.size(); ++k) {
    LinearMap up = m, dn = m;
    up.weight[k] += 1e-6;
    dn.weight[k] -= 1e-6;
    EXPECT_NEAR(g.grad_weight[k], (value(e, up) - value(e, dn)) / 2e-6, 1e-8);
  }
  for (std::size_t k = 0; k < m.bias.size(); ++k) {
    LinearMap up = m, dn = m;
    up.bias[k] += 1e-6;
    dn.bias[k] -= 1e-6;
    EXPECT_NEAR(g.grad_bias[k], (value(e, up) - value(e, dn)) / 2e-6, 1e-8);
  }
}

TEST(MseDecode, ExactFitAndRescaling) {
  const Array e = random_matrix(5, 2, 12);
  const LinearMap m{random_matrix(3, 2, 13), {0.5, 0.0, -1.0}};
  const Array f = m.apply(e);
  EXPECT_NEAR(mse_decode_loss(e, f, m).loss.value, 0.0, 1e-30);
  const Array target = random_matrix(5, 3, 14);
  const double base = mse_decode_loss(e, target, m).loss.value;
  for (double c : {0.1, 3.0}) {
    Array es = e;
    for (double& v : es.values()) v /= c;
    LinearMap ms = m;
    for (double& v : ms.weight.values()) v *= c;
    EXPECT_NEAR(mse_decode_loss(es, target, ms).loss.value, base, 1e-12);
  }
  EXPECT_THROW(mse_decode_loss(e, random_matrix(5, 2, 1), m), ContractError);
}

TEST(Binning, HandInstances) {
  EXPECT_EQ(bin_pseudo_labels(Array::from_rows({{0}, {1}, {10}}), 2), (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(bin_pseudo_labels(Array::matrix(4, 3, 2.0), 3), (std::vector<int>(4, 0)));
  // Sign of the principal axis is fixed, so reflected features give the same labels.
  EXPECT_EQ(bin_pseudo_labels(Array::from_rows({{0}, {-1}, {-10}}), 2), (std::vector<int>{1, 1, 0}));
}

TEST(BinnedPairLoss, DegenerateAndMarginCases) {
  const auto dist = pairwise_distances(random_matrix(4, 2, 30), false);
  double sq = 0.0;
  for (double v : dist.values.values()) sq += v * v / 16.0;
  EXPECT_NEAR(binned_pair_loss(dist, Array::matrix(4, 2, 1.0), 3, 1.0).value, sq, 1e-14);
  EXPECT_DOUBLE_EQ(
      binned_pair_loss(fixed_distances(sym2(1.0)), Array::from_rows({{0}, {10}}), 2, 1.0).value, 0.0);
}

TEST(DerivativeContinuity, QuadSmoothPairKinked) {
  // Per-pair term at s = 0.5, margin 1, around D = 0.5.
  const double s = 0.5, h = 1e-7;
  auto pair_term = [&](double d) { return s * d * d + std::max(0.0, (1 - s) * (1 - s) - d * d); };
  auto quad_term = [&](double d) { return quad_component(s, 1.0, d); };
  auto left = [&](auto f, double x) { return (f(x) - f(x - h)) / h; };
  auto right = [&](auto f, double x) { return (f(x + h) - f(x)) / h; };
  EXPECT_NEAR(left(quad_term, 0.5), right(quad_term, 0.5), 1e-6);
  const double gap = right(pair_term, 0.5) - left(pair_term, 0.5);
  EXPECT_NEAR(gap, 1.0, 1e-5);  // hinge removes -2D = -1 on the right
  // The library gradient picks the right-hand branch (hinge inactive) at the kink.
  const auto g = pair_loss(fixed_distances(sym2(0.5)), sim2(s), 1.0).grad_distances;
  EXPECT_NEAR(g(0, 1) * 4.0, 2 * s * 0.5, 1e-15);
}
