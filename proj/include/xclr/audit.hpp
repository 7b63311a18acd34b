#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xclr/array.hpp"
#include "xclr/encoder.hpp"
#include "xclr/losses.hpp"

namespace xclr {

// Z(i, j) = |f_i - f_j| / |E_i - E_j| over pairs i != j. Undefined entries (the diagonal
// and pairs where both distances vanish) hold NaN; collapsed pairs with distinct
// features hold +inf and set `unbounded`.
struct BilipschitzReport {
  std::size_t n = 0;
  std::vector<double> z;  // n x n, row-major
  double l_min = std::numeric_limits<double>::quiet_NaN();
  double l_max = std::numeric_limits<double>::quiet_NaN();
  double target = 0.0;  // max_kl |f_k - f_l| / margin
  double spread = std::numeric_limits<double>::quiet_NaN();
  bool unbounded = false;
  std::size_t defined_pairs = 0;

  double operator()(std::size_t i, std::size_t j) const { return z[i * n + j]; }
  // Values of Z over i < j pairs that are defined and finite.
  std::vector<double> finite_values() const;
};

inline constexpr double kPairEpsilon = 1e-12;

BilipschitzReport pair_lipschitz(const Array& embeddings, const Array& features, double margin = 1.0);

// Least-squares affine decoder from embeddings to features.
LinearMap fit_linear_decoder(const Array& embeddings, const Array& features);

struct RescalingReport {
  double c = 1.0;
  double mse_before = 0.0, mse_after = 0.0;
  double l_min_before = 0.0, l_min_after = 0.0;
  double l_max_before = 0.0, l_max_after = 0.0;
  bool mse_unchanged = false;  // |after - before| < 1e-10
  bool bounds_scaled = false;  // both bounds x c within 1e-9 relative
};

// Divides the final encoder affine layer by c and multiplies the decoder by c.
// Requires an identity head activation.
RescalingReport rescaling_counterexample(const EncoderParams& params, const LinearMap& decoder,
                                         double c, const Array& X, const Array& F);

enum class PacApproach { validation_interval, training_interval, one_sided };
std::string to_string(PacApproach a);

double pac_bound_validation_interval(std::uint64_t n_val, double delta);
double pac_bound_training_interval(double p_val, std::uint64_t n_val, double delta);
double pac_bound_one_sided(std::uint64_t n_val, double delta);

struct PacReport {
  PacApproach approach = PacApproach::validation_interval;
  std::uint64_t n_val = 0;
  double delta = 0.05;
  std::optional<double> p_val;  // training_interval only
  std::optional<std::pair<double, double>> interval;
  double bound = 0.0;
  bool vacuous = false;  // bound > 1
};

PacReport pac_report(PacApproach approach, std::uint64_t n_val, double delta,
                     std::optional<double> p_val = {});

// Fraction of values outside [lo, hi].
double empirical_violation_rate(const std::vector<double>& z_val, double lo, double hi);

// Disjoint pairs from a seeded shuffle of the indices, chunked in twos; each index is
// used at most once.
std::vector<std::pair<std::size_t, std::size_t>> sample_disjoint_pairs(
    const std::vector<std::size_t>& indices, std::uint64_t seed);

// Z values of the listed pairs; pairs with zero embedding distance are skipped
// (or +inf if their features differ).
std::vector<double> pair_constants(const Array& embeddings, const Array& features,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

struct PacCurveRow {
  std::uint64_t n_val;
  double bound_a1;  // validation interval
  double bound_a2;  // training interval
};

struct PacCurve {
  std::vector<PacCurveRow> rows;
  // Smallest grid point from which approach 1 is at least as tight as approach 2.
  std::optional<std::uint64_t> crossover;
  bool a2_wins_below_crossover = false;
};

PacCurve pac_curve(const std::vector<std::uint64_t>& grid, double delta, double p_val);

struct TauProbeRow {
  double tau;
  double value;
  double dev_max;   // |value - max|
  double dev_mean;  // |value - mean|
};

struct TauProbe {
  std::vector<TauProbeRow> rows;  // sorted by tau
  double max = 0.0, mean = 0.0;
  bool max_convergence_monotone = false;   // dev_max shrinks as tau decreases
  bool mean_convergence_monotone = false;  // dev_mean shrinks as tau increases
};

TauProbe tau_limit_probe(const Array& components, std::vector<double> taus);

struct FreeEmbeddingFit {
  Array embeddings;
  double loss = 0.0;
  std::uint32_t restarts = 0;
  std::uint32_t iterations = 0;
};

// Minimizes quad_loss over free embedding vectors (no encoder) with linear batch
// similarity and unnormalized distances, by Levenberg-Marquardt with seeded restarts.
FreeEmbeddingFit fit_free_embeddings(const Array& features, std::size_t embedding_dim,
                                     double margin, std::uint64_t seed,
                                     double target_loss = 1e-10);

}  // namespace xclr
