#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "semiconv/labeling.hpp"
#include "semiconv/tensor.hpp"

namespace semiconv {

enum class FieldKind { convolutional, semiconvolutional };

/// Per-pixel embeddings [D,H,W]. In a semi-convolutional field the first two
/// channels are geometric (they carry pixel location) and the remaining D-2
/// are appearance channels.
struct EmbeddingField {
  Tensor values;
  FieldKind kind = FieldKind::convolutional;

  std::size_t dims() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }

  std::vector<std::size_t> geometric_channels() const;
  std::vector<std::size_t> appearance_channels() const;

  /// [H*W, D] view, one row per pixel in raster order (differentiable).
  Tensor pixel_rows() const;
  /// [N, D] rows for the given raster indices (differentiable).
  Tensor pixel_rows(std::span<const std::size_t> pixels) const;
  std::vector<double> embedding_at(std::size_t pixel) const;
};

/// [2,H,W] with channel 0 = x and channel 1 = y; the top-left pixel center is (0,0).
Tensor coord_grid(std::size_t height, std::size_t width);

/// Combines a convolutional map [D,H,W] with the coordinate grid [2,H,W].
using MixingFunction = std::function<Tensor(const Tensor& phi, const Tensor& coords)>;

/// phi + (x, y, 0, ..., 0) per pixel.
Tensor additive_mixing(const Tensor& phi, const Tensor& coords);

EmbeddingField semiconvolve(const Tensor& phi, const MixingFunction& mixing);

/// Semi-convolutional field with the additive mixing. Requires D >= 2.
EmbeddingField attach_coords(const Tensor& phi);

/// Wraps phi unchanged, for the translation-invariant baseline.
EmbeddingField convolutional_field(const Tensor& phi);

/// Inverse of attach_coords: Psi minus the zero-padded coordinates.
Tensor recover_phi(const EmbeddingField& field);

/// Geometric part of phi, i.e. the per-pixel displacement Psi^g - u. [2,H,W].
Tensor displacement_field(const EmbeddingField& field);

/// sqrt(mean ||Psi^g_u - mean_S Psi^g||^2) for each instance: how tightly the
/// displacement arrows of one instance converge.
std::vector<double> endpoint_spread(const EmbeddingField& field, const InstanceLabeling& gt);

struct MarginReport {
  double within = 0.0;   ///< fraction of same-instance pairs with distance <= 1 - M
  double between = 0.0;  ///< fraction of cross-instance pairs with distance >= 1 + M
  std::size_t pairs = 0;
};

/// Samples `sample_pairs` same-instance and `sample_pairs` cross-instance
/// foreground pixel pairs. Diagnostic only; nothing trains against it.
MarginReport check_margin(const EmbeddingField& field, const InstanceLabeling& gt, double margin,
                          std::size_t sample_pairs, std::uint64_t seed);

}  // namespace semiconv
