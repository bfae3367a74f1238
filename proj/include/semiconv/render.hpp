#pragma once

#include <span>

#include "semiconv/embedding.hpp"
#include "semiconv/io.hpp"
#include "semiconv/labeling.hpp"
#include "semiconv/seedcut.hpp"

namespace semiconv {

/// First channel of a [C,H,W] image, clamped to [0, 1], as gray levels.
RgbImage render_grayscale(const Tensor& image);

/// Instance ids in palette colors, background black.
RgbImage render_labels(const InstanceLabeling& labels);

/// Displacement arrows u -> u + Phi^g_u for every `stride`-th foreground pixel
/// (in both axes) over the dimmed image, colored by ground-truth instance.
/// Arrow tips are drawn white.
RgbImage render_arrows(const EmbeddingField& field, const InstanceLabeling& gt, const Tensor& image,
                       std::size_t stride = 1);

/// Box outlines and their cut masks over the image, one palette color per box.
RgbImage render_cuts(const Tensor& image, std::span<const BoxCut> cuts);

}  // namespace semiconv
