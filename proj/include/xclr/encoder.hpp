#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "xclr/array.hpp"

namespace xclr {

enum class HeadActivation : std::uint8_t { identity = 0, relu = 1 };

// Residual temporal-convolution encoder. Each block is
//   conv(k, stride) -> ReLU -> conv(k, 1) -> + skip -> ReLU
// where the skip path is a strided 1x1 projection whenever channels or length change.
// After the blocks: mean over time, affine -> ReLU -> affine to embedding_dim.
struct EncoderConfig {
  std::uint32_t input_channels = 1;
  std::uint32_t input_length = 64;
  std::uint32_t blocks = 4;
  std::uint32_t hidden_channels = 16;
  std::uint32_t kernel_size = 3;
  std::vector<std::uint32_t> strides{1, 1, 1, 1};
  std::uint32_t head_hidden = 32;
  std::uint32_t embedding_dim = 16;
  std::uint64_t seed = 0;
  HeadActivation head_activation = HeadActivation::identity;  // after the final affine

  // Desk-scale defaults for a given input shape.
  static EncoderConfig defaults(std::uint32_t channels, std::uint32_t length,
                                std::uint32_t embedding_dim, std::uint64_t seed = 0);

  // Throws ContractError naming the offending field.
  void validate() const;
  // Temporal length after each block.
  std::vector<std::uint32_t> block_lengths() const;
  bool block_has_projection(std::uint32_t block) const;

  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderParams {
  EncoderConfig config;
  ParameterSet params;

  bool operator==(const EncoderParams&) const = default;
};

// Fan-in scaled uniform initialization from config.seed.
EncoderParams init_encoder(const EncoderConfig& config);

// batch: N x c x T. Returns N x e.
Array encode(const EncoderParams& params, const Array& batch);

// Gradients of <grad_embeddings, encode(params, batch)> w.r.t. every parameter.
ParameterSet encode_backward(const EncoderParams& params, const Array& batch,
                             const Array& grad_embeddings);

// Parameter checkpoints ("XCLRP" format). Load and save failures throw CheckpointError.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace xclr
