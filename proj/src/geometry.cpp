#include "xclr/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "xclr/error.hpp"
#include "xclr/parallel.hpp"

namespace xclr {

std::string to_string(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::linear: return "linear";
    case SimilarityKind::quadratic: return "quadratic";
    case SimilarityKind::gaussian: return "gaussian";
  }
  return "?";
}

SimilarityKind similarity_kind_from_string(const std::string& s) {
  if (s == "linear") return SimilarityKind::linear;
  if (s == "quadratic") return SimilarityKind::quadratic;
  if (s == "gaussian") return SimilarityKind::gaussian;
  throw ContractError("unknown similarity kind '" + s + "'");
}

void SimilaritySpec::validate() const {
  if (kind == SimilarityKind::gaussian) {
    require(sigma.has_value(), "gaussian similarity needs sigma");
    require(*sigma > 0.0, "gaussian sigma must be positive");
  } else {
    require(!sigma.has_value(), "sigma is only meaningful for gaussian similarity");
  }
  if (scope == SimilarityScope::global) {
    require(global_max.has_value(), "global similarity scope needs global_max");
    require(*global_max >= 0.0, "global_max must be nonnegative");
  } else {
    require(!global_max.has_value(), "global_max given for batch scope");
  }
}

namespace {
double row_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}
}  // namespace

Array raw_distance_matrix(const Array& points) {
  require(points.rank() == 2, "distance matrix needs a rank-2 point array");
  const std::size_t n = points.rows();
  Array d = Array::matrix(n, n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d(i, j) = row_distance(points.row(std::min(i, j)), points.row(std::max(i, j)));
  });
  return d;
}

double max_pairwise_distance(const Array& points) {
  const Array d = raw_distance_matrix(points);
  return *std::max_element(d.values().begin(), d.values().end());
}

std::vector<double> row_mean_norms(const Array& embeddings) {
  require(embeddings.rank() == 2 && embeddings.rows() >= 2, "row_mean_norms needs N >= 2");
  const Array d = raw_distance_matrix(embeddings);
  const std::size_t n = d.rows();
  std::vector<double> mu(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += d(i, j);
    mu[i] = std::max(s / static_cast<double>(n), kMuFloor);
  }
  return mu;
}

DistanceMatrix pairwise_distances(const Array& embeddings, bool normalize) {
  require(embeddings.rank() == 2 && embeddings.rows() >= 2, "pairwise_distances needs N >= 2");
  DistanceMatrix out;
  out.raw = raw_distance_matrix(embeddings);
  out.embeddings = embeddings;
  out.normalized = normalize;
  out.values = out.raw;
  if (normalize) {
    const std::size_t n = out.raw.rows();
    out.mu.resize(n);
    out.mu_clamped.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += out.raw(i, j);
      const double m = s / static_cast<double>(n);
      out.mu_clamped[i] = m < kMuFloor;
      out.mu[i] = std::max(m, kMuFloor);
      for (std::size_t j = 0; j < n; ++j) out.values(i, j) = out.raw(i, j) / out.mu[i];
    }
  }
  return out;
}

Array similarity_matrix(const Array& features, const SimilaritySpec& spec) {
  spec.validate();
  require(features.rank() == 2 && features.rows() >= 2, "similarity_matrix needs N >= 2");
  const Array dist = raw_distance_matrix(features);
  const std::size_t n = dist.rows();
  Array s = Array::matrix(n, n, 1.0);

  if (spec.kind == SimilarityKind::gaussian) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s(i, j) = std::exp(-dist(i, j) * dist(i, j) / *spec.sigma);
    return s;
  }

  const double governing = spec.scope == SimilarityScope::global
                               ? *spec.global_max
                               : *std::max_element(dist.values().begin(), dist.values().end());
  if (governing <= 0.0) return s;  // identical features everywhere: s = 1
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double v = std::clamp(1.0 - dist(i, j) / governing, 0.0, 1.0);
      if (spec.kind == SimilarityKind::quadratic) v *= v;
      s(i, j) = v;
    }
  }
  return s;
}

Array distances_backward(const DistanceMatrix& d, const Array& grad_distances) {
  const std::size_t n = d.n();
  require(grad_distances.rank() == 2 && grad_distances.rows() == n && grad_distances.cols() == n,
          "distances_backward: gradient must be N x N");
  const Array& e = d.embeddings;
  const std::size_t dim = e.cols();

  // dLoss/dRaw_ij
  Array g_raw = Array::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!d.normalized) {
      for (std::size_t j = 0; j < n; ++j) g_raw(i, j) = grad_distances(i, j);
      continue;
    }
    const double mu = d.mu[i];
    double through_mu = 0.0;  // sum_j G_ij * raw_ij / mu^2, the dependence of D_i. on mu_i
    if (!d.mu_clamped[i]) {
      for (std::size_t j = 0; j < n; ++j) through_mu += grad_distances(i, j) * d.raw(i, j);
      through_mu /= mu * mu * static_cast<double>(n);
    }
    for (std::size_t j = 0; j < n; ++j) g_raw(i, j) = grad_distances(i, j) / mu - through_mu;
  }

  // raw_ij = |E_i - E_j| is symmetric, so row i collects g_raw(i, j) + g_raw(j, i).
  Array grad_e = Array::matrix(n, dim);
  parallel_for(n, [&](std::size_t i) {
    auto gi = grad_e.row(i);
    const auto ei = e.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double r = d.raw(i, j);
      if (r <= 0.0) continue;  // subgradient 0 at coincident points
      const double coeff = (g_raw(i, j) + g_raw(j, i)) / r;
      const auto ej = e.row(j);
      for (std::size_t k = 0; k < dim; ++k) gi[k] += coeff * (ei[k] - ej[k]);
    }
  });
  return grad_e;
}

}  // namespace xclr
