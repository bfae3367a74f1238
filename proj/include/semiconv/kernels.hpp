#pragma once

#include <array>
#include <optional>
#include <span>

#include "semiconv/tensor.hpp"

namespace semiconv {

// Pointwise affinities between two embedding vectors. All are symmetric,
// equal 1 at zero distance and lie in (0, 1].

/// exp(-||a - b||^2 / 2).
double gaussian_kernel(std::span<const double> a, std::span<const double> b);

/// Gaussian kernel written as a geometric factor over the steered positions
/// u + phi_g and an appearance factor over phi_a.
double factorized_kernel(std::array<double, 2> u, std::array<double, 2> v, std::span<const double> phi_g_u,
                         std::span<const double> phi_g_v, std::span<const double> phi_a_u,
                         std::span<const double> phi_a_v);

/// Classic bilateral kernel: spatial factor on raw positions times appearance factor.
double bilateral_kernel(std::array<double, 2> u, std::array<double, 2> v, std::span<const double> app_u,
                        std::span<const double> app_v);

/// exp(-||a - b|| / sigma).
double steered_laplacian(std::span<const double> a, std::span<const double> b, double sigma);

enum class KernelFamily { gaussian, bilateral, steered_laplacian };

/// Kernel selector plus scale, stored as log sigma. Only steered_laplacian uses it.
struct KernelParams {
  KernelFamily family = KernelFamily::steered_laplacian;
  Tensor log_sigma = Tensor::scalar(0.0);
  /// Smoothing inside the norm; the smoothed distance is shifted so it is exactly 0 at 0.
  double eps = 1e-8;

  static KernelParams laplacian(double sigma, bool learnable = false);
  double sigma() const;
};

/// log K(seed, rows_i) for every row of `rows` [N,D]; `seed` is [D].
/// Differentiable in seed, rows and log_sigma. The bilateral family needs
/// pixel coordinates [N,2] for the rows and the seed position [2].
Tensor log_kernel_row(const Tensor& seed, const Tensor& rows, const KernelParams& params,
                      const std::optional<Tensor>& row_coords = std::nullopt,
                      const std::optional<Tensor>& seed_coords = std::nullopt);

enum class SeedMode { hard, soft };

struct SeedFusionResult {
  std::size_t seed_index = 0;  ///< argmax of the scores, lowest index on ties
  Tensor seed_weights;         ///< p_s: softmax(s) in soft mode, one-hot in hard mode
  Tensor seed_embedding;       ///< [D]
  Tensor kernel_row;           ///< K(u_s, u_i), [N]
  Tensor fused_scores;         ///< s_i + log K(u_s, u_i), [N]
  Tensor probabilities;        ///< logistic(fused_scores), [N]
};

/// Picks a seed from `scores` [N] (argmax, or a softmax expectation of the
/// embeddings in soft mode) and re-scores each pixel by its affinity with it
/// in log space. `embeddings` is [N,D].
SeedFusionResult fuse_scores(const Tensor& scores, const Tensor& embeddings, const KernelParams& params,
                             SeedMode mode, const std::optional<Tensor>& coords = std::nullopt);

}  // namespace semiconv
