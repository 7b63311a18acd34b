#include "xclr/losses.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "xclr/error.hpp"
#include "xclr/lse.hpp"

namespace xclr {

void MarginSpec::validate() const {
  require(margin > 0.0, "margin must be positive");
  require(temperature > 0.0, "temperature must be positive");
}

namespace {

void check_pair_inputs(const DistanceMatrix& d, const Array& s) {
  const std::size_t n = d.n();
  require(n >= 2, "pairwise losses need N >= 2");
  require(s.rank() == 2 && s.rows() == n && s.cols() == n,
          "similarity matrix must be N x N matching the distances");
}

double inv_pairs(std::size_t n) { return 1.0 / (static_cast<double>(n) * static_cast<double>(n)); }

// Per-pair quadratic components and their derivative in D.
void quad_components(const DistanceMatrix& d, const Array& s, double margin, Array& comp,
                     Array& dcomp) {
  const std::size_t n = d.n();
  comp = Array::matrix(n, n);
  dcomp = Array::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double r = (1.0 - s(i, j)) * margin - d.values(i, j);
      comp(i, j) = r * r;
      dcomp(i, j) = -2.0 * r;
    }
  }
}

double ordered_sum(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

}  // namespace

LossOutput pair_loss(const DistanceMatrix& d, const Array& s, double margin) {
  check_pair_inputs(d, s);
  require(margin > 0.0, "margin must be positive");
  const std::size_t n = d.n();
  const double w = inv_pairs(n);
  LossOutput out;
  out.components = Array::matrix(n, n);
  out.grad_distances = Array::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double sij = s(i, j);
      const double dij = d.values(i, j);
      const double push = (1.0 - sij) * (1.0 - sij) * margin * margin - dij * dij;
      out.components(i, j) = sij * dij * dij + std::max(0.0, push);
      double g = 2.0 * sij * dij;
      if (push > 0.0) g -= 2.0 * dij;
      out.grad_distances(i, j) = w * g;
    }
  }
  out.value = w * ordered_sum(out.components.values());
  out.grad_embeddings = distances_backward(d, out.grad_distances);
  return out;
}

LossOutput quad_loss(const DistanceMatrix& d, const Array& s, double margin) {
  check_pair_inputs(d, s);
  require(margin > 0.0, "margin must be positive");
  const std::size_t n = d.n();
  const double w = inv_pairs(n);
  LossOutput out;
  quad_components(d, s, margin, out.components, out.grad_distances);
  for (auto& g : out.grad_distances.values()) g *= w;
  out.value = w * ordered_sum(out.components.values());
  out.grad_embeddings = distances_backward(d, out.grad_distances);
  return out;
}

Array softmax_weights(const Array& components, double tau) {
  for (double v : components.values())
    if (!std::isfinite(v)) throw NumericError("softmax_weights: non-finite component");
  const auto w = softmax(components.values(), tau);
  return Array(components.shape(), w);
}

LossOutput expclr_loss(const DistanceMatrix& d, const Array& s, const MarginSpec& spec) {
  check_pair_inputs(d, s);
  spec.validate();
  LossOutput out;
  Array dcomp;
  quad_components(d, s, spec.margin, out.components, dcomp);
  out.value = lse_mean(out.components.values(), spec.temperature);
  const Array weights = softmax_weights(out.components, spec.temperature);
  out.grad_distances = Array(dcomp.shape());
  for (std::size_t k = 0; k < dcomp.size(); ++k) out.grad_distances[k] = weights[k] * dcomp[k];
  out.grad_embeddings = distances_backward(d, out.grad_distances);
  return out;
}

Array LinearMap::apply(const Array& embeddings) const {
  require(embeddings.rank() == 2 && embeddings.cols() == in_dim(),
          "decoder input dimension mismatch");
  require(bias.size() == out_dim(), "decoder bias length mismatch");
  const std::size_t n = embeddings.rows();
  Array out = Array::matrix(n, out_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < out_dim(); ++r) {
      double acc = bias[r];
      for (std::size_t c = 0; c < in_dim(); ++c) acc += weight(r, c) * embeddings(i, c);
      out(i, r) = acc;
    }
  }
  return out;
}

MseDecodeOutput mse_decode_loss(const Array& embeddings, const Array& features,
                                const LinearMap& decoder) {
  require(embeddings.rank() == 2 && features.rank() == 2, "mse_decode_loss needs matrices");
  require(embeddings.rows() == features.rows(), "embeddings and features disagree on N");
  require(decoder.weight.rank() == 2 && decoder.in_dim() == embeddings.cols() &&
              decoder.out_dim() == features.cols(),
          "decoder shape " + shape_string(decoder.weight.shape()) + " does not map e=" +
              std::to_string(embeddings.cols()) + " to d=" + std::to_string(features.cols()));
  const std::size_t n = embeddings.rows();
  const std::size_t e = embeddings.cols();
  const std::size_t dim = features.cols();
  const Array pred = decoder.apply(embeddings);

  MseDecodeOutput out;
  out.loss.components = Array::matrix(n, 1);
  out.loss.grad_embeddings = Array::matrix(n, e);
  out.grad_weight = Array::matrix(dim, e);
  out.grad_bias.assign(dim, 0.0);
  const double w = 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t r = 0; r < dim; ++r) {
      const double res = pred(i, r) - features(i, r);
      sq += res * res;
      const double g = w * res;
      out.grad_bias[r] += g;
      for (std::size_t c = 0; c < e; ++c) {
        out.grad_weight(r, c) += g * embeddings(i, c);
        out.loss.grad_embeddings(i, c) += g * decoder.weight(r, c);
      }
    }
    out.loss.components(i, 0) = sq;
  }
  out.loss.value = ordered_sum(out.loss.components.values()) / static_cast<double>(n);
  return out;
}

std::vector<int> bin_pseudo_labels(const Array& features, int bins) {
  require(bins >= 2, "binning needs at least 2 bins");
  require(features.rank() == 2 && features.rows() >= 1, "binning needs a feature matrix");
  const std::size_t n = features.rows();
  const std::size_t dim = features.cols();

  Eigen::MatrixXd centered(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) centered(i, k) = features(i, k);
  centered.rowwise() -= centered.colwise().mean();

  std::vector<int> labels(n, 0);
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index top = eig.eigenvalues().size() - 1;
  if (eig.eigenvalues()(top) <= 1e-24) return labels;

  Eigen::VectorXd axis = eig.eigenvectors().col(top);
  Eigen::Index lead = 0;
  axis.cwiseAbs().maxCoeff(&lead);
  if (axis(lead) < 0) axis = -axis;  // fixed orientation
  const Eigen::VectorXd proj = centered * axis;

  const double lo = proj.minCoeff();
  const double hi = proj.maxCoeff();
  if (hi - lo <= 1e-12 * (1.0 + std::abs(hi))) return labels;
  const double width = (hi - lo) / bins;
  for (std::size_t i = 0; i < n; ++i) {
    const int b = static_cast<int>(std::floor((proj(static_cast<Eigen::Index>(i)) - lo) / width));
    labels[i] = std::clamp(b, 0, bins - 1);
  }
  return labels;
}

Array delta_similarity(const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  require(n >= 1, "delta_similarity needs labels");
  Array s = Array::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  return s;
}

LossOutput binned_pair_loss(const DistanceMatrix& d, const Array& features, int bins,
                            double margin) {
  require(features.rank() == 2 && features.rows() == d.n(),
          "binned_pair_loss: features must have one row per sample");
  return pair_loss(d, delta_similarity(bin_pseudo_labels(features, bins)), margin);
}

}  // namespace xclr
