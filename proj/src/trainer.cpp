#include "xclr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "xclr/adam.hpp"
#include "xclr/error.hpp"
#include "xclr/rng.hpp"

namespace xclr {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::U: return "U";
    case TrainMode::S: return "S";
    case TrainMode::SS: return "SS";
  }
  return "?";
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::pair: return "pair";
    case LossKind::quad: return "quad";
    case LossKind::expclr: return "expclr";
    case LossKind::mse_decode: return "mse_decode";
    case LossKind::binned: return "binned";
    case LossKind::cross_entropy: return "cross_entropy";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "U") return TrainMode::U;
  if (s == "S") return TrainMode::S;
  if (s == "SS") return TrainMode::SS;
  throw ContractError("unknown training mode '" + s + "' (expected U, S or SS)");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "pair") return LossKind::pair;
  if (s == "quad") return LossKind::quad;
  if (s == "expclr") return LossKind::expclr;
  if (s == "mse" || s == "mse_decode") return LossKind::mse_decode;
  if (s == "binned") return LossKind::binned;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  throw ContractError("unknown loss kind '" + s + "'");
}

void TrainConfig::validate() const {
  // A global scope without a max is resolved from the working set at train time.
  SimilaritySpec sim = similarity;
  if (sim.scope == SimilarityScope::global && !sim.global_max) sim.global_max = 0.0;
  sim.validate();
  margin.validate();
  require(batch_size >= 2, "batch_size must be at least 2 for pairwise losses");
  require(base_lr > 0.0 && std::isfinite(base_lr), "base_lr must be positive");
  require(decay > 0.0 && decay <= 1.0, "decay must lie in (0, 1]");
  if (mode != TrainMode::U) {
    require(label_fraction.has_value(), "label_fraction is required for modes S and SS");
    require(*label_fraction > 0.0 && *label_fraction <= 1.0, "label_fraction must lie in (0, 1]");
  }
  require(loss != LossKind::cross_entropy || mode == TrainMode::S,
          "the cross_entropy loss needs mode S");
  require(loss != LossKind::binned || bins >= 1, "bins must be positive");
}

void TrainHistory::append(const TrainHistory& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
}

void TrainHistory::write_csv(std::ostream& os) const {
  os << "epoch,loss,lr,seconds\n";
  for (const auto& r : records) os << r.epoch << ',' << r.loss << ',' << r.lr << ',' << r.seconds << '\n';
}

ParameterSet init_head(LossKind loss, std::size_t embedding_dim, std::size_t target_dim,
                       std::uint64_t seed) {
  ParameterSet head;
  if (loss != LossKind::mse_decode && loss != LossKind::cross_entropy) return head;
  const std::string prefix = loss == LossKind::mse_decode ? "decoder" : "classifier";
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(embedding_dim));
  Array w = Array::matrix(target_dim, embedding_dim);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  head.add(prefix + ".weight", std::move(w));
  head.add(prefix + ".bias", Array({target_dim}, 0.0));
  return head;
}

namespace {

LinearMap head_map(const ParameterSet& head, const std::string& prefix) {
  const Array& b = head.get(prefix + ".bias");
  return {head.get(prefix + ".weight"), std::vector<double>(b.values().begin(), b.values().end())};
}

struct CrossEntropyOutput {
  double value;
  Array grad_embeddings;
  Array grad_weight;
  Array grad_bias;
};

CrossEntropyOutput cross_entropy(const Array& E, const Array& one_hot_targets, const LinearMap& m) {
  const std::size_t n = E.rows(), e = E.cols(), c = m.out_dim();
  require(one_hot_targets.cols() == c, "cross_entropy: class count mismatch with classifier");
  const Array logits = m.apply(E);
  CrossEntropyOutput out{0.0, Array::matrix(n, e), Array::matrix(c, e), Array({c}, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> g(c);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, logits(i, k));
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(logits(i, k) - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t k = 0; k < c; ++k) {
      const double p = std::exp(logits(i, k) - log_z);
      out.value -= one_hot_targets(i, k) * (logits(i, k) - log_z) * inv_n;
      g[k] = (p - one_hot_targets(i, k)) * inv_n;
    }
    for (std::size_t k = 0; k < c; ++k) {
      out.grad_bias[k] += g[k];
      for (std::size_t j = 0; j < e; ++j) {
        out.grad_weight(k, j) += g[k] * E(i, j);
        out.grad_embeddings(i, j) += g[k] * m.weight(k, j);
      }
    }
  }
  return out;
}

}  // namespace

BatchObjective evaluate_batch(const EncoderParams& params, const ParameterSet& head,
                              const TrainConfig& config, LossKind loss, const Array& X,
                              const Array& targets) {
  require(X.extent(0) == targets.rows(), "evaluate_batch: X and targets disagree on N");
  require(X.extent(0) >= 2, "evaluate_batch: need at least 2 samples");
  BatchObjective out;
  const Array E = encode(params, X);
  Array grad_e;

  switch (loss) {
    case LossKind::pair:
    case LossKind::quad:
    case LossKind::expclr:
    case LossKind::binned: {
      if (loss != LossKind::binned) out.similarity = similarity_matrix(targets, config.similarity);
      const DistanceMatrix d = pairwise_distances(E, config.normalize_distances);
      LossOutput l;
      if (loss == LossKind::pair)
        l = pair_loss(d, out.similarity, config.margin.margin);
      else if (loss == LossKind::quad)
        l = quad_loss(d, out.similarity, config.margin.margin);
      else if (loss == LossKind::expclr)
        l = expclr_loss(d, out.similarity, config.margin);
      else
        l = binned_pair_loss(d, targets, config.bins, config.margin.margin);
      out.value = l.value;
      grad_e = std::move(l.grad_embeddings);
      break;
    }
    case LossKind::mse_decode: {
      const auto m = mse_decode_loss(E, targets, head_map(head, "decoder"));
      out.value = m.loss.value;
      grad_e = m.loss.grad_embeddings;
      out.head_grad.add("decoder.weight", m.grad_weight);
      out.head_grad.add("decoder.bias", Array({m.grad_bias.size()}, m.grad_bias));
      break;
    }
    case LossKind::cross_entropy: {
      auto ce = cross_entropy(E, targets, head_map(head, "classifier"));
      out.value = ce.value;
      grad_e = std::move(ce.grad_embeddings);
      out.head_grad.add("classifier.weight", std::move(ce.grad_weight));
      out.head_grad.add("classifier.bias", std::move(ce.grad_bias));
      break;
    }
  }
  if (!std::isfinite(out.value)) return out;
  out.encoder_grad = encode_backward(params, X, grad_e);
  return out;
}

namespace {

struct Phase {
  const Array* X;                    // whole dataset inputs
  std::vector<std::size_t> rows;     // working set
  Array targets;                     // aligned with rows
  LossKind loss;
  std::uint32_t epochs;
  std::uint64_t shuffle_seed;
};

TrainHistory run_phase(EncoderParams& params, ParameterSet& head, const TrainConfig& base_config,
                       const Phase& phase, const BatchObserver& observer) {
  TrainHistory history;
  const std::size_t n = phase.rows.size();
  require(n >= 2, "training needs at least 2 samples in the working set");
  if (phase.epochs == 0) return history;

  TrainConfig config = base_config;
  if (config.similarity.scope == SimilarityScope::global && !config.similarity.global_max)
    config.similarity.global_max = max_pairwise_distance(phase.targets);

  AdamState enc_state = AdamState::fresh(params.params, config.base_lr, config.decay);
  AdamState head_state = AdamState::fresh(head, config.base_lr, config.decay);
  const std::size_t batch = std::min<std::size_t>(config.batch_size, n);

  Rng rng(phase.shuffle_seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::uint32_t epoch = 0; epoch < phase.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    enc_state.epoch = head_state.epoch = epoch;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      if (len < 2) break;
      std::span<const std::size_t> local(order.data() + start, len);
      std::vector<std::size_t> global_rows(len);
      for (std::size_t k = 0; k < len; ++k) global_rows[k] = phase.rows[local[k]];
      const Array Xb = phase.X->gather(global_rows);
      const Array Tb = phase.targets.gather(local);

      const std::string where = " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches);
      BatchObjective obj;
      try {
        obj = evaluate_batch(params, head, config, phase.loss, Xb, Tb);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + where);
      }
      if (!std::isfinite(obj.value))
        throw NumericError("non-finite " + to_string(phase.loss) + " loss" + where);
      if (observer) observer(BatchEvent{epoch, batches, local, Tb, obj.similarity});
      try {
        adam_update(params.params, obj.encoder_grad, enc_state);
        if (head.size() > 0) adam_update(head, obj.head_grad, head_state);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + where);
      }
      loss_sum += obj.value;
      ++batches;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.records.push_back(
        {epoch, loss_sum / static_cast<double>(batches), enc_state.learning_rate(), secs});
  }
  return history;
}

Array rows_of(const Array& m, const std::vector<std::size_t>& rows) { return m.gather(rows); }

std::vector<std::size_t> label_subset(const Dataset& ds, const TrainConfig& config) {
  return subsample_labels(ds, *config.label_fraction, derive_seed(config.seed, 11));
}

}  // namespace

TrainResult train(const EncoderConfig& encoder, const TrainConfig& config, const Dataset& dataset,
                  const BatchObserver& observer) {
  config.validate();
  dataset.validate();
  require(encoder.input_channels == dataset.channels() && encoder.input_length == dataset.length(),
          "encoder input shape does not match the dataset");

  TrainResult result;
  result.params = init_encoder(encoder);
  if (config.mode == TrainMode::SS) {
    TrainConfig pre = config;
    pre.mode = TrainMode::U;
    TrainResult u = train(encoder, pre, dataset, observer);
    TrainResult ft = fine_tune(u.params, config, dataset, observer);
    ft.history.records.insert(ft.history.records.begin(), u.history.records.begin(),
                              u.history.records.end());
    return ft;
  }

  Phase phase{&dataset.X, {}, {}, config.loss, config.epochs, derive_seed(config.seed, 1)};
  if (config.mode == TrainMode::U) {
    phase.rows.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) phase.rows[i] = i;
    phase.targets = dataset.F;
  } else {
    result.labeled_indices = label_subset(dataset, config);
    phase.rows = result.labeled_indices;
    phase.targets = rows_of(one_hot(dataset.labels(), dataset.num_classes), phase.rows);
  }
  result.head = init_head(config.loss, encoder.embedding_dim, phase.targets.cols(),
                          derive_seed(config.seed, 3));
  result.history = run_phase(result.params, result.head, config, phase, observer);
  return result;
}

TrainResult fine_tune(const EncoderParams& params, const TrainConfig& config,
                      const Dataset& dataset, const BatchObserver& observer) {
  config.validate();
  dataset.validate();
  require(config.mode == TrainMode::SS, "fine_tune expects mode SS");
  TrainResult result;
  result.params = params;
  result.labeled_indices = label_subset(dataset, config);
  require(result.labeled_indices.size() >= 2, "fine_tune: labeled subset has fewer than 2 samples");

  Phase phase{&dataset.X,
              result.labeled_indices,
              rows_of(one_hot(dataset.labels(), dataset.num_classes), result.labeled_indices),
              LossKind::expclr,
              config.fine_tune_epochs ? config.fine_tune_epochs : config.epochs,
              derive_seed(config.seed, 2)};
  result.history = run_phase(result.params, result.head, config, phase, observer);
  return result;
}

}  // namespace xclr
