#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xclr/data.hpp"
#include "xclr/encoder.hpp"
#include "xclr/trainer.hpp"

namespace xclr::cli {

// Schema violation; `field` is the dotted JSON path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct EvalToggles {
  bool linear = true;
  bool knn = true;
  std::uint32_t k = 1;
  std::uint32_t probe_iterations = 500;
  double probe_lr = 0.1;
};

struct AuditToggles {
  bool bilipschitz = true;
  bool pac = false;
  double delta = 0.05;
  std::uint64_t nval = 1000;
  double pval = 0.05;
  std::uint64_t pair_seed = 0;
  std::vector<std::uint64_t> pac_grid{100,   300,   1000,   3000,   10000,   30000,
                                      100000, 300000, 1000000, 3000000, 10000000};
};

struct ExperimentConfig {
  std::optional<std::string> dataset_path;
  SyntheticSpec synthetic = SyntheticSpec::reference();  // used when no path is given
  // Input shape and seed are filled in per dataset and trial.
  EncoderConfig encoder;
  bool encoder_strides_set = false;
  TrainConfig train;
  double split_fraction = 0.8;
  std::uint64_t split_seed = 0;
  EvalToggles eval;
  AuditToggles audit;
  std::vector<double> tau_grid{0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds{0};
};

ExperimentConfig parse_experiment(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

// Sets the scalar at a dotted path; the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& j, const std::string& path, const std::string& value);

// Encoder configuration for a dataset shape and trial seed.
EncoderConfig encoder_for(const ExperimentConfig& config, std::size_t channels,
                          std::size_t length, std::uint64_t seed);

// Entry point of the xclr tool. Exit codes: 0 success, 1 other failure, 2 configuration
// error, 3 numeric failure, 4 data or I/O error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace xclr::cli
