#include "xclr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "xclr/error.hpp"
#include "xclr/parallel.hpp"
#include "xclr/rng.hpp"

namespace xclr {

std::vector<int> LinearProbe::predict(const Array& embeddings) const {
  require(embeddings.rank() == 2 && embeddings.cols() == weight.rows(),
          "probe: embedding width does not match the probe");
  const std::size_t n = embeddings.rows(), e = weight.rows(), c = bias.size();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_logit = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double z = bias[k];
      for (std::size_t j = 0; j < e; ++j) z += embeddings(i, j) * weight(j, k);
      if (k == 0 || z > best_logit) {
        best_logit = z;
        best = static_cast<int>(k);
      }
    }
    out[i] = best;
  }
  return out;
}

LinearProbe fit_linear_probe(const Array& embeddings, const std::vector<int>& labels,
                             const ProbeConfig& config) {
  require(embeddings.rank() == 2, "probe: embeddings must be N x e");
  require(embeddings.rows() == labels.size(), "probe: label count does not match N");
  const std::set<int> present(labels.begin(), labels.end());
  require(present.size() >= 2, "probe: at least two classes must be present");
  require(*present.begin() >= 0, "probe: labels must be nonnegative");
  const std::size_t n = embeddings.rows(), e = embeddings.cols();
  const std::size_t c = static_cast<std::size_t>(*present.rbegin()) + 1;

  // Standardized copy Z = (E - mean) / sd.
  std::vector<double> mean(e, 0.0), scale(e, 1.0);
  for (std::size_t j = 0; j < e; ++j) {
    for (std::size_t i = 0; i < n; ++i) mean[j] += embeddings(i, j);
    mean[j] /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (embeddings(i, j) - mean[j]) * (embeddings(i, j) - mean[j]);
    const double sd = std::sqrt(var / static_cast<double>(n));
    scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  Array z = Array::matrix(n, e);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) z(i, j) = (embeddings(i, j) - mean[j]) * scale[j];

  Rng rng(config.seed);
  Array w = Array::matrix(e, c);
  for (double& v : w.values()) v = rng.uniform(-0.01, 0.01);
  std::vector<double> b(c, 0.0);

  Array gw = Array::matrix(e, c);
  std::vector<double> gb(c), p(c);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::uint32_t it = 0; it < config.iterations; ++it) {
    gw.fill(0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < c; ++k) {
        double s = b[k];
        for (std::size_t j = 0; j < e; ++j) s += z(i, j) * w(j, k);
        p[k] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) sum += (p[k] = std::exp(p[k] - mx));
      for (std::size_t k = 0; k < c; ++k) {
        const double g = (p[k] / sum - (labels[i] == static_cast<int>(k) ? 1.0 : 0.0)) * inv_n;
        gb[k] += g;
        for (std::size_t j = 0; j < e; ++j) gw(j, k) += g * z(i, j);
      }
    }
    for (std::size_t k = 0; k < c; ++k) b[k] -= config.learning_rate * gb[k];
    for (std::size_t q = 0; q < w.size(); ++q) w[q] -= config.learning_rate * gw[q];
  }

  // Fold the standardization back: logits = E (W / sd) + (b - mean^T W / sd).
  LinearProbe probe{Array::matrix(e, c), b};
  for (std::size_t j = 0; j < e; ++j)
    for (std::size_t k = 0; k < c; ++k) {
      probe.weight(j, k) = w(j, k) * scale[j];
      probe.bias[k] -= mean[j] * probe.weight(j, k);
    }
  require(probe.weight.all_finite(), "probe: fitted weights are not finite");
  return probe;
}

double probe_accuracy(const LinearProbe& probe, const Array& embeddings,
                      const std::vector<int>& labels) {
  require(embeddings.rows() == labels.size(), "probe_accuracy: label count does not match N");
  require(!labels.empty(), "probe_accuracy: empty input");
  const auto pred = probe.predict(embeddings);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double knn_accuracy(const Array& train, const std::vector<int>& train_labels, const Array& test,
                    const std::vector<int>& test_labels, std::size_t k) {
  require(train.rank() == 2 && train.rows() > 0, "knn: empty train set");
  require(train.rows() == train_labels.size(), "knn: train label count does not match");
  require(test.rank() == 2 && test.rows() == test_labels.size() && test.rows() > 0,
          "knn: test labels do not match the test set");
  require(test.cols() == train.cols(), "knn: train and test widths differ");
  require(k >= 1 && k <= train.rows(), "knn: k must lie in [1, N_train]");
  const std::size_t nt = train.rows(), e = train.cols();

  std::vector<int> hit(test.rows(), 0);
  parallel_for(test.rows(), [&](std::size_t q) {
    std::vector<std::pair<double, std::size_t>> dist(nt);
    for (std::size_t i = 0; i < nt; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < e; ++j) {
        const double diff = test(q, j) - train(i, j);
        s += diff * diff;
      }
      dist[i] = {s, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    // Votes in neighbour order; the first class to reach the top count wins ties.
    std::vector<std::pair<int, std::size_t>> votes;  // (label, count), in first-seen order
    for (std::size_t r = 0; r < k; ++r) {
      const int label = train_labels[dist[r].second];
      auto it = std::find_if(votes.begin(), votes.end(), [&](auto& v) { return v.first == label; });
      if (it == votes.end())
        votes.push_back({label, 1});
      else
        ++it->second;
    }
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
      if (it->second > best->second) best = it;
    hit[q] = best->first == test_labels[q];
  });
  const std::size_t correct = std::accumulate(hit.begin(), hit.end(), std::size_t{0});
  return static_cast<double>(correct) / static_cast<double>(test.rows());
}

}  // namespace xclr
