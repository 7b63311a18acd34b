#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xclr/array.hpp"

namespace xclr {

enum class SimilarityKind { linear, quadratic, gaussian };
enum class SimilarityScope { batch, global };

std::string to_string(SimilarityKind kind);
SimilarityKind similarity_kind_from_string(const std::string& s);

// How expert-feature distances become [0, 1] similarities.
//   linear:    s = 1 - |f_i - f_j| / max_kl |f_k - f_l|
//   quadratic: s = linear^2
//   gaussian:  s = exp(-|f_i - f_j|^2 / sigma)
// The max is taken over the rows passed in (batch scope) or supplied up front (global scope).
struct SimilaritySpec {
  SimilarityKind kind = SimilarityKind::quadratic;
  std::optional<double> sigma;  // gaussian only
  SimilarityScope scope = SimilarityScope::batch;
  std::optional<double> global_max;  // global scope only

  static SimilaritySpec linear() { return {SimilarityKind::linear, {}, SimilarityScope::batch, {}}; }
  static SimilaritySpec quadratic() {
    return {SimilarityKind::quadratic, {}, SimilarityScope::batch, {}};
  }
  static SimilaritySpec gaussian(double sigma = 1.0) {
    return {SimilarityKind::gaussian, sigma, SimilarityScope::batch, {}};
  }
  SimilaritySpec with_global_max(double max_distance) const {
    SimilaritySpec s = *this;
    s.scope = SimilarityScope::global;
    s.global_max = max_distance;
    return s;
  }

  // Throws ContractError when the optional fields disagree with kind/scope.
  void validate() const;
};

// Pairwise embedding distances. values(i, j) is the distance used by the losses
// (raw / mu_i when normalized). The raw distances, mu and the source embeddings are
// kept so that loss gradients can be pulled back to the embeddings.
struct DistanceMatrix {
  Array values;
  Array raw;
  std::vector<double> mu;        // empty when not normalized
  std::vector<bool> mu_clamped;  // true where the 1e-12 guard was active
  Array embeddings;
  bool normalized = false;

  std::size_t n() const { return values.rows(); }
};

inline constexpr double kMuFloor = 1e-12;

// mu_i = (1/N) sum_j |E_i - E_j|, floored at 1e-12. Requires N >= 2.
std::vector<double> row_mean_norms(const Array& embeddings);

DistanceMatrix pairwise_distances(const Array& embeddings, bool normalize);

// Symmetric N x N matrix of pairwise Euclidean distances between rows.
Array raw_distance_matrix(const Array& points);
double max_pairwise_distance(const Array& points);

// Symmetric, unit diagonal, entries in [0, 1].
Array similarity_matrix(const Array& features, const SimilaritySpec& spec);

// Pulls dLoss/dD back to dLoss/dE through the normalization (if any) and the Euclidean norm.
Array distances_backward(const DistanceMatrix& d, const Array& grad_distances);

}  // namespace xclr
