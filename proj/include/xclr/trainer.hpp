#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xclr/data.hpp"
#include "xclr/encoder.hpp"
#include "xclr/geometry.hpp"
#include "xclr/losses.hpp"

namespace xclr {

enum class TrainMode { U, S, SS };
enum class LossKind { pair, quad, expclr, mse_decode, binned, cross_entropy };

std::string to_string(TrainMode m);
std::string to_string(LossKind k);
TrainMode train_mode_from_string(const std::string& s);
// Accepts "mse" as an alias of "mse_decode".
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::U;
  LossKind loss = LossKind::expclr;
  SimilaritySpec similarity = SimilaritySpec::quadratic();
  MarginSpec margin;
  std::uint32_t epochs = 30;
  std::uint32_t fine_tune_epochs = 0;  // SS only; 0 means the same as epochs
  std::uint32_t batch_size = 64;
  double base_lr = 3e-3;
  double decay = 0.99;
  std::optional<double> label_fraction;  // required for S and SS
  std::uint64_t seed = 0;
  bool normalize_distances = true;
  int bins = 8;  // binned loss only

  void validate() const;
};

struct EpochRecord {
  std::uint32_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;

  void append(const TrainHistory& other);
  // epoch,loss,lr,seconds
  void write_csv(std::ostream& os) const;
};

// Seen by the observer before every optimizer step.
struct BatchEvent {
  std::uint32_t epoch;
  std::size_t batch;
  std::span<const std::size_t> indices;  // rows of the phase's working set
  const Array& targets;                  // features or one-hot labels of the batch
  const Array& similarity;               // empty for the mse_decode and cross_entropy losses
};
using BatchObserver = std::function<void(const BatchEvent&)>;

struct TrainResult {
  EncoderParams params;
  TrainHistory history;
  ParameterSet head;  // decoder or classifier weights for mse_decode / cross_entropy
  std::vector<std::size_t> labeled_indices;  // modes S and SS
};

// U: all of (X, F). S: (X, one_hot(Y)) on the stratified label subset.
// SS: U on the whole dataset, then fine_tune.
TrainResult train(const EncoderConfig& encoder, const TrainConfig& config, const Dataset& dataset,
                  const BatchObserver& observer = {});

// Supervised ExpCLR on one-hot labels of the label_fraction subset, with fresh optimizer state.
TrainResult fine_tune(const EncoderParams& params, const TrainConfig& config,
                      const Dataset& dataset, const BatchObserver& observer = {});

// Loss and gradients of one batch; shared by the training loop and the gradient tests.
struct BatchObjective {
  double value = 0.0;
  Array similarity;
  ParameterSet encoder_grad;
  ParameterSet head_grad;
};

// Head parameters required by a loss kind (empty for the pairwise kinds).
ParameterSet init_head(LossKind loss, std::size_t embedding_dim, std::size_t target_dim,
                       std::uint64_t seed);

BatchObjective evaluate_batch(const EncoderParams& params, const ParameterSet& head,
                              const TrainConfig& config, LossKind loss, const Array& X,
                              const Array& targets);

}  // namespace xclr
