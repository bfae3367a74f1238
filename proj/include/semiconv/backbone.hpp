#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "semiconv/ops.hpp"
#include "semiconv/tensor.hpp"

namespace semiconv {

struct BackboneConfig {
  std::size_t in_channels = 1;
  /// Output channels of each layer; the last entry is the embedding dimension D.
  std::vector<std::size_t> channels{16, 32, 8};
  /// Odd square kernel extent per layer.
  std::vector<std::size_t> kernel_sizes{3, 3, 3};
  Padding padding = Padding::circular;
  std::uint64_t seed = 0;
  /// Multiplier on the gradient the trunk receives from the final (embedding) layer.
  double head_grad_scale = 1.0;

  std::size_t dims() const { return channels.empty() ? 0 : channels.back(); }
  void set_dims(std::size_t d) { channels.back() = d; }
  void validate() const;
};

/// Stride-1 stack of "same"-padded convolutions with ReLU between layers.
/// Every output pixel depends only on a window of the input, so the map is
/// translation-equivariant (exactly so with circular padding).
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  Backbone(const Backbone& other);
  Backbone& operator=(const Backbone& other);
  Backbone(Backbone&&) noexcept = default;
  Backbone& operator=(Backbone&&) noexcept = default;

  /// x: [C_in,H,W] -> [D,H,W].
  Tensor forward(const Tensor& x) const;

  /// Computes only the output pixels flagged in `output_mask` (H*W flags) and
  /// whatever each hidden layer must provide for them. Flagged outputs equal
  /// the full forward pass bit for bit; all other outputs are zero.
  Tensor forward(const Tensor& x, std::span<const std::uint8_t> output_mask) const;

  /// Weight and bias handles in layer order (w0, b0, w1, b1, ...).
  std::vector<Tensor> parameters() const;
  const BackboneConfig& config() const { return config_; }
  std::size_t dims() const { return config_.dims(); }
  std::size_t layer_count() const { return weights_.size(); }

  /// Output flags each layer has to produce for `output_mask` at the last layer.
  std::vector<std::vector<std::uint8_t>> layer_masks(std::size_t height, std::size_t width,
                                                     std::span<const std::uint8_t> output_mask) const;

  bool same_parameters(const Backbone& other) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  /// The file carries layer geometry and weights; padding, seed and gradient
  /// scale come from `base`.
  static Backbone load(std::istream& in, const BackboneConfig& base = {});
  static Backbone load(const std::filesystem::path& path, const BackboneConfig& base = {});

 private:
  Backbone(BackboneConfig config, std::vector<Tensor> weights, std::vector<Tensor> biases);
  Tensor run(const Tensor& x, const std::vector<std::vector<std::uint8_t>>* masks) const;

  BackboneConfig config_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace semiconv
