#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semiconv {

struct GradSuiteEntry {
  std::string op;
  std::size_t instances = 0;
  /// Worst relative error over all instances and all checked arguments.
  double max_error = 0.0;
};

/// Finite-difference checks of conv2d, pull_to_mean_loss, steered_laplacian,
/// fuse_scores (soft) and mask_bce on `instances` random problems each.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, std::size_t instances = 20, double h = 1e-5);

}  // namespace semiconv
