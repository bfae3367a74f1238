#include "semiconv/render.hpp"

#include <algorithm>
#include <cmath>

#include "semiconv/errors.hpp"

namespace semiconv {

namespace {

std::uint8_t gray_level(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Rgb blend(Rgb a, Rgb b, double t) {
  Rgb out;
  for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::lround((1.0 - t) * a[i] + t * b[i]));
  return out;
}

}  // namespace

RgbImage render_grayscale(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("render: image must be [C,H,W]");
  const std::size_t h = image.dim(1), w = image.dim(2);
  RgbImage out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t g = gray_level(image[y * w + x]);
      out.set(x, y, {g, g, g});
    }
  return out;
}

RgbImage render_labels(const InstanceLabeling& labels) {
  RgbImage out(labels.width, labels.height);
  for (std::size_t p = 0; p < labels.labels.size(); ++p)
    out.set(p % labels.width, p / labels.width, palette_color(labels.labels[p]));
  return out;
}

RgbImage render_arrows(const EmbeddingField& field, const InstanceLabeling& gt, const Tensor& image,
                       std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("render_arrows: stride must be positive");
  if (gt.height != field.height() || gt.width != field.width()) throw ShapeError("render_arrows: grid mismatch");
  const Tensor disp = displacement_field(field);
  RgbImage out = render_grayscale(image);
  for (auto& v : out.pixels) v = static_cast<std::uint8_t>(v / 3);
  const std::size_t w = gt.width, plane = gt.height * gt.width;
  std::vector<std::pair<long, long>> tips;
  for (std::size_t p = 0; p < plane; ++p) {
    const std::size_t x = p % w, y = p / w;
    if (gt.labels[p] == 0 || x % stride || y % stride) continue;
    const long tx = std::lround(static_cast<double>(x) + disp[p]);
    const long ty = std::lround(static_cast<double>(y) + disp[plane + p]);
    out.draw_line(static_cast<long>(x), static_cast<long>(y), tx, ty, palette_color(gt.labels[p]));
    tips.emplace_back(tx, ty);
  }
  for (const auto& [tx, ty] : tips)
    if (tx >= 0 && ty >= 0) out.set(static_cast<std::size_t>(tx), static_cast<std::size_t>(ty), {255, 255, 255});
  return out;
}

RgbImage render_cuts(const Tensor& image, std::span<const BoxCut> cuts) {
  RgbImage out = render_grayscale(image);
  for (std::size_t b = 0; b < cuts.size(); ++b) {
    const Box& box = cuts[b].box;
    const Rgb color = palette_color(static_cast<std::int32_t>(b + 1));
    std::size_t i = 0;
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x, ++i)
        if (cuts[b].mask[i]) out.set(x, y, blend(out.get(x, y), color, 0.6));
    const long x0 = static_cast<long>(box.x0), y0 = static_cast<long>(box.y0);
    const long x1 = static_cast<long>(box.x1) - 1, y1 = static_cast<long>(box.y1) - 1;
    out.draw_line(x0, y0, x1, y0, color);
    out.draw_line(x1, y0, x1, y1, color);
    out.draw_line(x1, y1, x0, y1, color);
    out.draw_line(x0, y1, x0, y0, color);
  }
  return out;
}

}  // namespace semiconv
