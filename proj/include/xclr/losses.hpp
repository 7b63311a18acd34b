#pragma once

#include <string>
#include <vector>

#include "xclr/array.hpp"
#include "xclr/geometry.hpp"

namespace xclr {

// Output of a pairwise loss. components(i, j) is the per-pair term L_ij (for the MSE
// decoding loss it is N x 1, one squared residual per sample). grad_distances is
// dLoss/dD_ij (empty for the MSE loss) and grad_embeddings is dLoss/dE with the
// chain through distance normalization already applied.
struct LossOutput {
  double value = 0.0;
  Array components;
  Array grad_distances;
  Array grad_embeddings;
};

struct MarginSpec {
  double margin = 1.0;       // Delta
  double temperature = 1.0;  // tau, ExpCLR only

  void validate() const;
};

// (1/N^2) sum_ij s_ij D_ij^2 + max{0, (1-s_ij)^2 Delta^2 - D_ij^2}.
// At the kink D = Delta (1 - s) the hinge branch contributes a zero subgradient.
LossOutput pair_loss(const DistanceMatrix& d, const Array& s, double margin);

// (1/N^2) sum_ij ((1-s_ij) Delta - D_ij)^2.
LossOutput quad_loss(const DistanceMatrix& d, const Array& s, double margin);

// tau * log((1/N^2) sum_ij exp(L_ij / tau)) with L_ij the quadratic components.
// The gradient weights each pair by its softmax weight.
LossOutput expclr_loss(const DistanceMatrix& d, const Array& s, const MarginSpec& spec);

// exp(L_nm / tau) / sum_ij exp(L_ij / tau); equals dExpCLR/dL_nm. Entries sum to 1.
Array softmax_weights(const Array& components, double tau);

// Affine decoder e -> d: f' = W e + b, W is d x e.
struct LinearMap {
  Array weight;
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  Array apply(const Array& embeddings) const;
};

struct MseDecodeOutput {
  LossOutput loss;
  Array grad_weight;
  std::vector<double> grad_bias;
};

// (1/N) sum_i |M(E_i) - f_i|^2 with gradients for E and M.
MseDecodeOutput mse_decode_loss(const Array& embeddings, const Array& features,
                                const LinearMap& decoder);

// Pseudo-labels from equal-width bins along the first principal component of the
// features. Zero-variance features land in a single bin.
std::vector<int> bin_pseudo_labels(const Array& features, int bins);

// Pair-loss with delta similarity on the binned pseudo-labels.
LossOutput binned_pair_loss(const DistanceMatrix& d, const Array& features, int bins,
                            double margin);

// Kronecker-delta similarity matrix of a label vector.
Array delta_similarity(const std::vector<int>& labels);

}  // namespace xclr
