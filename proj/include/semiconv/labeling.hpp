#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace semiconv {

/// Per-pixel instance ids over an H x W grid: 0 is background, 1..count are
/// instances, and every id in 1..count occurs at least once.
struct InstanceLabeling {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> labels;
  std::int32_t count = 0;

  std::size_t pixels() const { return height * width; }
  std::vector<std::uint8_t> foreground_mask() const;
  std::vector<std::size_t> foreground_indices() const;
  /// Pixel indices of each instance, index k-1 for id k.
  std::vector<std::vector<std::size_t>> instance_pixels() const;
  /// Throws if the invariants above do not hold.
  void validate() const;
};

}  // namespace semiconv
