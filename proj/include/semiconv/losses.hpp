#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "semiconv/embedding.hpp"
#include "semiconv/labeling.hpp"
#include "semiconv/tensor.hpp"

namespace semiconv {

/// Foreground segments S_1..S_K as raster pixel indices, with the background
/// S_0 kept apart. Segments are disjoint, non-empty, and together with the
/// background cover the grid.
struct SegmentSet {
  std::vector<std::vector<std::size_t>> segments;
  std::vector<std::size_t> background;

  static SegmentSet from_labeling(const InstanceLabeling& labeling);
  void validate(std::size_t pixel_count) const;
};

struct PullLossOptions {
  double eps = 1e-8;
  /// Treat the background as one more segment (ablation only).
  bool include_background = false;
};

/// Sum over segments of the mean unsquared distance between each pixel
/// embedding and its segment mean, sqrt(||Psi_u - mean_S Psi||^2 + eps).
Tensor pull_to_mean_loss(const EmbeddingField& field, const SegmentSet& segments, const PullLossOptions& options = {});

/// Mean binary cross-entropy of per-pixel probabilities against a {0,1} mask.
/// Probabilities are clamped to [1e-7, 1 - 1e-7].
Tensor mask_bce(const Tensor& probabilities, std::span<const std::uint8_t> mask);

}  // namespace semiconv
