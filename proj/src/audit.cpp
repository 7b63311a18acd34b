#include "xclr/audit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "xclr/error.hpp"
#include "xclr/geometry.hpp"
#include "xclr/lse.hpp"
#include "xclr/rng.hpp"

namespace xclr {

namespace {

double row_distance(const Array& m, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.cols(); ++k) {
    const double d = m(i, k) - m(j, k);
    s += d * d;
  }
  return std::sqrt(s);
}

void require_delta(double delta) {
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
}

}  // namespace

std::vector<double> BilipschitzReport::finite_values() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::isfinite((*this)(i, j))) out.push_back((*this)(i, j));
  return out;
}

BilipschitzReport pair_lipschitz(const Array& embeddings, const Array& features, double margin) {
  require(embeddings.rank() == 2 && features.rank() == 2, "pair_lipschitz: matrices expected");
  require(embeddings.rows() == features.rows(), "pair_lipschitz: E and F disagree on N");
  require(embeddings.rows() >= 2, "pair_lipschitz: need N >= 2");
  require(margin > 0.0, "pair_lipschitz: margin must be positive");
  const std::size_t n = embeddings.rows();
  BilipschitzReport r;
  r.n = n;
  r.z.assign(n * n, std::numeric_limits<double>::quiet_NaN());
  double f_max = 0.0;
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double nf = row_distance(features, i, j);
      const double ne = row_distance(embeddings, i, j);
      f_max = std::max(f_max, nf);
      double z;
      if (ne > kPairEpsilon) {
        z = nf / ne;
        lo = std::min(lo, z);
        hi = std::max(hi, z);
        ++r.defined_pairs;
      } else if (nf > kPairEpsilon) {
        z = INFINITY;
        r.unbounded = true;
      } else {
        continue;
      }
      r.z[i * n + j] = r.z[j * n + i] = z;
    }
  }
  r.target = f_max / margin;
  if (r.defined_pairs > 0) {
    r.l_min = lo;
    r.l_max = hi;
  }
  if (r.unbounded) r.l_max = INFINITY;
  r.spread = r.l_max - r.l_min;
  return r;
}

LinearMap fit_linear_decoder(const Array& embeddings, const Array& features) {
  require(embeddings.rows() == features.rows(), "fit_linear_decoder: E and F disagree on N");
  const std::size_t n = embeddings.rows(), e = embeddings.cols(), d = features.cols();
  Eigen::MatrixXd A(n, e + 1), B(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < e; ++j) A(i, j) = embeddings(i, j);
    A(i, e) = 1.0;
    for (std::size_t k = 0; k < d; ++k) B(i, k) = features(i, k);
  }
  const Eigen::MatrixXd W = A.completeOrthogonalDecomposition().solve(B);  // (e+1) x d
  LinearMap m{Array::matrix(d, e), std::vector<double>(d)};
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t j = 0; j < e; ++j) m.weight(k, j) = W(j, k);
    m.bias[k] = W(e, k);
  }
  require(m.weight.all_finite(), "fit_linear_decoder: solution is not finite");
  return m;
}

RescalingReport rescaling_counterexample(const EncoderParams& params, const LinearMap& decoder,
                                         double c, const Array& X, const Array& F) {
  require(c > 0.0 && std::isfinite(c), "rescaling: c must be positive");
  require(params.config.head_activation == HeadActivation::identity,
          "rescaling: the final encoder layer must be linear");
  RescalingReport r;
  r.c = c;
  const Array e_before = encode(params, X);
  r.mse_before = mse_decode_loss(e_before, F, decoder).loss.value;
  const auto before = pair_lipschitz(e_before, F);

  EncoderParams scaled = params;
  for (const char* name : {"head.fc2.weight", "head.fc2.bias"})
    for (double& v : scaled.params.get(name).values()) v /= c;
  LinearMap dec = decoder;
  for (double& v : dec.weight.values()) v *= c;

  const Array e_after = encode(scaled, X);
  r.mse_after = mse_decode_loss(e_after, F, dec).loss.value;
  const auto after = pair_lipschitz(e_after, F);
  r.l_min_before = before.l_min;
  r.l_max_before = before.l_max;
  r.l_min_after = after.l_min;
  r.l_max_after = after.l_max;
  r.mse_unchanged = std::abs(r.mse_after - r.mse_before) < 1e-10;
  auto scaled_ok = [c](double b, double a) { return std::abs(a - c * b) <= 1e-9 * std::abs(c * b); };
  r.bounds_scaled = scaled_ok(r.l_min_before, r.l_min_after) && scaled_ok(r.l_max_before, r.l_max_after);
  return r;
}

std::string to_string(PacApproach a) {
  switch (a) {
    case PacApproach::validation_interval: return "validation_interval";
    case PacApproach::training_interval: return "training_interval";
    case PacApproach::one_sided: return "one_sided";
  }
  return "?";
}

double pac_bound_validation_interval(std::uint64_t n_val, double delta) {
  require_delta(delta);
  require(n_val >= 1, "n_val must be positive");
  const double n = static_cast<double>(n_val);
  return std::sqrt(8.0 * std::log(2.0 * n * (2.0 * n - 1.0) * 4.0 / delta) / n);
}

double pac_bound_training_interval(double p_val, std::uint64_t n_val, double delta) {
  require_delta(delta);
  require(n_val >= 1, "n_val must be positive");
  require(p_val >= 0.0 && p_val <= 1.0, "p_val must lie in [0, 1]");
  return p_val + std::sqrt(std::log(2.0 / delta) / static_cast<double>(n_val));
}

double pac_bound_one_sided(std::uint64_t n_val, double delta) {
  require_delta(delta);
  require(n_val >= 1, "n_val must be positive");
  const double n = static_cast<double>(n_val);
  return std::sqrt(8.0 * std::log(8.0 * n / delta) / n);
}

PacReport pac_report(PacApproach approach, std::uint64_t n_val, double delta,
                     std::optional<double> p_val) {
  PacReport r;
  r.approach = approach;
  r.n_val = n_val;
  r.delta = delta;
  switch (approach) {
    case PacApproach::validation_interval:
      r.bound = pac_bound_validation_interval(n_val, delta);
      break;
    case PacApproach::training_interval:
      require(p_val.has_value(), "training_interval bound needs p_val");
      r.p_val = p_val;
      r.bound = pac_bound_training_interval(*p_val, n_val, delta);
      break;
    case PacApproach::one_sided:
      r.bound = pac_bound_one_sided(n_val, delta);
      break;
  }
  r.vacuous = r.bound > 1.0;
  return r;
}

double empirical_violation_rate(const std::vector<double>& z_val, double lo, double hi) {
  require(!z_val.empty(), "empirical_violation_rate: no validation values");
  std::size_t out = 0;
  for (double z : z_val) out += (z < lo || z > hi);
  return static_cast<double>(out) / static_cast<double>(z_val.size());
}

std::vector<std::pair<std::size_t, std::size_t>> sample_disjoint_pairs(
    const std::vector<std::size_t>& indices, std::uint64_t seed) {
  std::vector<std::size_t> idx = indices;
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k + 1 < idx.size(); k += 2) pairs.emplace_back(idx[k], idx[k + 1]);
  return pairs;
}

std::vector<double> pair_constants(const Array& embeddings, const Array& features,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  require(embeddings.rows() == features.rows(), "pair_constants: E and F disagree on N");
  std::vector<double> out;
  out.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    require(i < embeddings.rows() && j < embeddings.rows(), "pair_constants: index out of range");
    const double nf = row_distance(features, i, j);
    const double ne = row_distance(embeddings, i, j);
    if (ne > kPairEpsilon)
      out.push_back(nf / ne);
    else if (nf > kPairEpsilon)
      out.push_back(INFINITY);
  }
  return out;
}

PacCurve pac_curve(const std::vector<std::uint64_t>& grid, double delta, double p_val) {
  require(!grid.empty(), "pac_curve: empty grid");
  std::vector<std::uint64_t> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  PacCurve curve;
  for (auto n : sorted)
    curve.rows.push_back({n, pac_bound_validation_interval(n, delta),
                          pac_bound_training_interval(p_val, n, delta)});
  std::size_t from = curve.rows.size();
  while (from > 0 && curve.rows[from - 1].bound_a1 <= curve.rows[from - 1].bound_a2) --from;
  if (from < curve.rows.size()) {
    curve.crossover = curve.rows[from].n_val;
    curve.a2_wins_below_crossover = from > 0;
    for (std::size_t k = 0; k < from; ++k)
      curve.a2_wins_below_crossover &= curve.rows[k].bound_a2 < curve.rows[k].bound_a1;
  }
  return curve;
}

TauProbe tau_limit_probe(const Array& components, std::vector<double> taus) {
  require(components.size() > 0, "tau_limit_probe: empty components");
  require(!taus.empty(), "tau_limit_probe: empty tau grid");
  for (double t : taus) require(t > 0.0 && std::isfinite(t), "tau_limit_probe: tau must be positive");
  std::sort(taus.begin(), taus.end());
  const auto v = components.values();
  TauProbe p;
  p.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  p.mean = sum / static_cast<double>(v.size());
  for (double t : taus) {
    const double value = lse_mean(v, t);
    p.rows.push_back({t, value, std::abs(value - p.max), std::abs(value - p.mean)});
  }
  const double tol = 1e-12 * std::max(1.0, std::abs(p.max));
  p.max_convergence_monotone = p.mean_convergence_monotone = true;
  for (std::size_t k = 1; k < p.rows.size(); ++k) {
    p.max_convergence_monotone &= p.rows[k].dev_max + tol >= p.rows[k - 1].dev_max;
    p.mean_convergence_monotone &= p.rows[k].dev_mean <= p.rows[k - 1].dev_mean + tol;
  }
  return p;
}

FreeEmbeddingFit fit_free_embeddings(const Array& features, std::size_t embedding_dim,
                                     double margin, std::uint64_t seed, double target_loss) {
  require(features.rank() == 2 && features.rows() >= 2, "fit_free_embeddings: need N >= 2");
  require(embedding_dim >= 1, "fit_free_embeddings: embedding_dim must be positive");
  require(margin > 0.0, "fit_free_embeddings: margin must be positive");
  const std::size_t n = features.rows(), e = embedding_dim;
  const Array s = similarity_matrix(features, SimilaritySpec::linear());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> target;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      pairs.emplace_back(i, j);
      target.push_back((1.0 - s(i, j)) * margin);
    }
  const std::size_t m = pairs.size(), unknowns = n * e;

  auto residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (std::size_t p = 0; p < m; ++p) {
      const auto [i, j] = pairs[p];
      r(p) = target[p] - (x.segment(i * e, e) - x.segment(j * e, e)).norm();
    }
  };
  // quad_loss of the full symmetric matrix is twice the i<j residual sum over N^2.
  const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(n));

  FreeEmbeddingFit best;
  best.loss = INFINITY;
  Rng rng(seed);
  constexpr std::uint32_t kMaxRestarts = 50;
  constexpr std::uint32_t kMaxIterations = 2000;
  for (std::uint32_t restart = 0; restart < kMaxRestarts; ++restart) {
    Eigen::VectorXd x(unknowns);
    for (std::size_t k = 0; k < unknowns; ++k) x(k) = margin * rng.normal();
    Eigen::VectorXd r(m), r_try(m);
    residuals(x, r);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    Eigen::MatrixXd J(m, unknowns);
    std::uint32_t it = 0;
    for (; it < kMaxIterations && cost * scale > target_loss * 1e-8; ++it) {
      J.setZero();
      for (std::size_t p = 0; p < m; ++p) {
        const auto [i, j] = pairs[p];
        const Eigen::VectorXd diff = x.segment(i * e, e) - x.segment(j * e, e);
        const double len = diff.norm();
        if (len < 1e-300) continue;
        J.block(p, i * e, 1, e) = -diff.transpose() / len;
        J.block(p, j * e, 1, e) = diff.transpose() / len;
      }
      const Eigen::MatrixXd JtJ = J.transpose() * J;
      const Eigen::VectorXd g = J.transpose() * r;
      bool improved = false;
      while (lambda < 1e12) {
        Eigen::MatrixXd A = JtJ;
        A.diagonal().array() += lambda * (1.0 + JtJ.diagonal().array());
        const Eigen::VectorXd step = A.ldlt().solve(-g);
        const Eigen::VectorXd x_try = x + step;
        residuals(x_try, r_try);
        const double c_try = r_try.squaredNorm();
        if (c_try < cost) {
          x = x_try;
          r = r_try;
          cost = c_try;
          lambda = std::max(lambda / 3.0, 1e-12);
          improved = true;
          break;
        }
        lambda *= 4.0;
      }
      if (!improved) break;
    }
    const double loss = cost * scale;
    if (loss < best.loss) {
      best.loss = loss;
      best.embeddings = Array::matrix(n, e);
      for (std::size_t k = 0; k < unknowns; ++k) best.embeddings[k] = x(k);
      best.restarts = restart;
      best.iterations = it;
    }
    if (best.loss < target_loss) break;
  }
  // Report the library's own loss value for the returned embeddings.
  best.loss = quad_loss(pairwise_distances(best.embeddings, false), s, margin).value;
  if (!(best.loss < target_loss))
    throw NumericError("fit_free_embeddings: loss " + std::to_string(best.loss) +
                       " did not reach the target after " + std::to_string(kMaxRestarts) +
                       " restarts");
  return best;
}

}  // namespace xclr
