#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace semiconv {

using Rgb = std::array<std::uint8_t, 3>;

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // RGB, row-major

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, Rgb fill = {0, 0, 0});

  void set(std::size_t x, std::size_t y, Rgb c);
  Rgb get(std::size_t x, std::size_t y) const;
  /// Bresenham segment, clipped to the image.
  void draw_line(long x0, long y0, long x1, long y1, Rgb c);
};

void write_ppm(std::ostream& out, const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Fixed 32-entry palette for instance ids; id 0 (background) is black.
Rgb palette_color(std::int32_t id);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> pack_f32_le(std::span<const double> values);
std::vector<double> unpack_f32_le(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> pack_u16_le(std::span<const std::int32_t> values);
std::vector<std::int32_t> unpack_u16_le(std::span<const std::uint8_t> bytes);

/// Serializes with sorted object keys and numbers printed as %.17g, so equal
/// values always produce identical bytes.
std::string canonical_json(const nlohmann::json& value, int indent = 2);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace semiconv
