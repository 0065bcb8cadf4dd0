#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fwigan/nn.hpp"

namespace fwigan {

/// Shape of the scoring network. The input is a [in_channels, input_h, input_w]
/// stack of normalized gathers (one channel per shot, time by receiver).
struct CriticConfig {
  std::size_t in_channels = 1;
  std::size_t input_h = 64;
  std::size_t input_w = 64;
  std::size_t base_channels = 32;
  std::size_t n_blocks = 6;
  std::size_t fc_width = 2000;

  /// Input dims after trailing zero-padding to a multiple of 2^n_blocks.
  [[nodiscard]] std::size_t padded_h() const;
  [[nodiscard]] std::size_t padded_w() const;
  /// Output channels of block i: base_channels * 2^i.
  [[nodiscard]] std::vector<std::size_t> block_channels() const;
  /// Shape of the last block's feature map.
  [[nodiscard]] nn::Shape final_map_shape() const;
  [[nodiscard]] std::size_t flatten_size() const;
  /// Closed-form parameter count (conv and dense weights plus biases).
  [[nodiscard]] std::size_t parameter_count() const;

  /// Throws InvalidInput for zero sizes.
  void validate() const;

  friend bool operator==(const CriticConfig&, const CriticConfig&) = default;
};

/// n_blocks x [conv3x3 -> maxpool2x2 -> leaky_relu(0.1)], flatten,
/// dense(fc_width), leaky_relu(0.1), dense(1). No output activation.
class Critic {
 public:
  /// Conv and dense weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
  static Critic build(const CriticConfig& config, std::uint64_t seed);

  [[nodiscard]] const CriticConfig& config() const { return config_; }
  [[nodiscard]] nn::ParamStore& params() { return params_; }
  [[nodiscard]] const nn::ParamStore& params() const { return params_; }

  /// Scalar score node for x of shape [in_channels, input_h, input_w]; records
  /// a graph when grad mode is on.
  [[nodiscard]] nn::Tensor forward(const nn::Tensor& x) const;
  /// Score without recording a graph.
  [[nodiscard]] double score(const nn::Tensor& x) const;
  /// d score / d x, same shape as x.
  [[nodiscard]] nn::Tensor input_gradient(const nn::Tensor& x) const;

  /// Independent copy of the parameters.
  [[nodiscard]] Critic clone() const;

  void save(const std::filesystem::path& stem) const { params_.save(stem); }
  void load(const std::filesystem::path& stem) { params_.load(stem); }

 private:
  CriticConfig config_;
  nn::ParamStore params_;
};

}  // namespace fwigan
