#pragma once

#include <cstdint>
#include <vector>

#include "xclr/array.hpp"

namespace xclr {

// Multinomial logistic regression on frozen embeddings: logits = E W + b, W is e x C.
struct LinearProbe {
  Array weight;
  std::vector<double> bias;

  std::size_t num_classes() const { return bias.size(); }
  std::vector<int> predict(const Array& embeddings) const;
};

struct ProbeConfig {
  std::uint32_t iterations = 500;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

// Full-batch gradient descent, unregularized. Columns are standardized internally and
// the scaling is folded back into the returned weights. Throws ContractError if fewer
// than two classes are present.
LinearProbe fit_linear_probe(const Array& embeddings, const std::vector<int>& labels,
                             const ProbeConfig& config = {});

// Fraction of argmax-correct rows; ties go to the lowest class index.
double probe_accuracy(const LinearProbe& probe, const Array& embeddings,
                      const std::vector<int>& labels);

// Euclidean k-nearest-neighbour vote. Neighbours are ordered by (distance, train index);
// a tied vote goes to the class of the nearest neighbour among the tied classes.
double knn_accuracy(const Array& train, const std::vector<int>& train_labels, const Array& test,
                    const std::vector<int>& test_labels, std::size_t k = 1);

}  // namespace xclr
