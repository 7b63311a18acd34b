#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xclr/array.hpp"

namespace xclr {

// Inputs X (N x c x T), expert features F (N x d) and optional labels Y in [0, C).
struct Dataset {
  Array X;
  Array F;
  std::optional<std::vector<int>> Y;
  int num_classes = 0;
  std::string name;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return X.extent(0); }
  std::size_t channels() const { return X.extent(1); }
  std::size_t length() const { return X.extent(2); }
  std::size_t feature_dim() const { return F.cols(); }
  bool has_labels() const { return Y.has_value(); }
  const std::vector<int>& labels() const;

  // Throws ContractError on inconsistent N or out-of-range labels.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

enum class SyntheticFamily { sine_mixture, amplitude_classes };

std::string to_string(SyntheticFamily f);
SyntheticFamily synthetic_family_from_string(const std::string& s);

struct SyntheticSpec {
  std::uint32_t n = 600;
  std::uint32_t channels = 1;
  std::uint32_t length = 64;
  std::uint32_t classes = 3;
  std::uint32_t feature_dim = 4;  // must equal 4 * channels
  double noise_std = 0.1;
  std::uint64_t seed = 7;
  SyntheticFamily family = SyntheticFamily::sine_mixture;

  // The fixed instance used by the acceptance suite.
  static SyntheticSpec reference() { return {}; }
  void validate() const;
};

// sine_mixture: the class picks the frequency band of two summed sinusoids per channel,
// with a random per-sample amplitude and offset. amplitude_classes: the class picks the amplitude
// level (class 0 is flat). Features are raw_expert_features(X), standardized.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Per channel: (mean, standard deviation, zero-crossing count of the mean-centred
// signal, peak absolute amplitude); N x 4c.
Array raw_expert_features(const Array& X);
// Per-column zero mean and unit variance; zero-variance columns are only centred.
Array standardize_columns(const Array& F);

enum class DataErrorCode { io, bad_magic, bad_version, truncated, inconsistent, parse };

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  DataErrorCode code() const { return code_; }

 private:
  DataErrorCode code_;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

// Binary "XCLRD" file. Name and metadata are not part of the binary layout.
void save_binary(const Dataset& ds, const std::filesystem::path& path);
Dataset load_binary(const std::filesystem::path& path);

// Directory with X.csv, F.csv, Y.csv (if labelled) and meta.json.
void save_csv_dir(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_csv_dir(const std::filesystem::path& dir);

// Directories use the CSV layout; anything else is the binary format.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

// Seeded shuffle, then the first round(fraction * N) indices go to the first part.
SplitIndices split_indices(std::size_t n, double fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);

// Stratified: ceil(fraction * n_c) (at least 1) indices from every class; sorted.
std::vector<std::size_t> subsample_labels(const Dataset& ds, double fraction, std::uint64_t seed);

Array one_hot(const std::vector<int>& labels, int num_classes);

}  // namespace xclr
