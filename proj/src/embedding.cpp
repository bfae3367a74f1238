#include "semiconv/embedding.hpp"

#include <cmath>

#include "semiconv/errors.hpp"
#include "semiconv/ops.hpp"
#include "semiconv/rng.hpp"

namespace semiconv {

namespace {

Tensor padded_coords(std::size_t dims, std::size_t height, std::size_t width) {
  std::vector<double> v(dims * height * width, 0.0);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      v[y * width + x] = static_cast<double>(x);
      v[(height + y) * width + x] = static_cast<double>(y);
    }
  return Tensor(Shape{dims, height, width}, std::move(v));
}

void require_field(const Tensor& values) {
  if (values.rank() != 3) throw ShapeError("embedding: expected [D,H,W], got " + to_string(values.shape()));
}

double distance(const EmbeddingField& f, std::size_t u, std::size_t v) {
  const std::size_t plane = f.height() * f.width();
  const auto data = f.values.data();
  double acc = 0.0;
  for (std::size_t c = 0; c < f.dims(); ++c) {
    const double d = data[c * plane + u] - data[c * plane + v];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

std::vector<std::size_t> EmbeddingField::geometric_channels() const {
  if (kind != FieldKind::semiconvolutional) return {};
  return {0, 1};
}

std::vector<std::size_t> EmbeddingField::appearance_channels() const {
  std::vector<std::size_t> out;
  for (std::size_t c = kind == FieldKind::semiconvolutional ? 2 : 0; c < dims(); ++c) out.push_back(c);
  return out;
}

Tensor EmbeddingField::pixel_rows() const {
  return transpose(reshape(values, {dims(), height() * width()}));
}

Tensor EmbeddingField::pixel_rows(std::span<const std::size_t> pixels) const {
  return gather_rows(pixel_rows(), pixels);
}

std::vector<double> EmbeddingField::embedding_at(std::size_t pixel) const {
  const std::size_t plane = height() * width();
  if (pixel >= plane) throw ShapeError("embedding: pixel index out of range");
  std::vector<double> out(dims());
  for (std::size_t c = 0; c < dims(); ++c) out[c] = values[c * plane + pixel];
  return out;
}

Tensor coord_grid(std::size_t height, std::size_t width) { return padded_coords(2, height, width); }

Tensor additive_mixing(const Tensor& phi, const Tensor& coords) {
  require_field(phi);
  if (phi.dim(0) < 2) throw ShapeError("attach_coords: need at least 2 channels, got " + std::to_string(phi.dim(0)));
  if (coords.shape() != Shape{2, phi.dim(1), phi.dim(2)}) throw ShapeError("attach_coords: coordinate grid mismatch");
  // Coordinates occupy the first two planes; the rest stay zero.
  std::vector<double> hat(phi.numel(), 0.0);
  std::copy(coords.data().begin(), coords.data().end(), hat.begin());
  return add(phi, Tensor(phi.shape(), std::move(hat)));
}

EmbeddingField semiconvolve(const Tensor& phi, const MixingFunction& mixing) {
  require_field(phi);
  Tensor psi = mixing(phi, coord_grid(phi.dim(1), phi.dim(2)));
  require_field(psi);
  return {std::move(psi), FieldKind::semiconvolutional};
}

EmbeddingField attach_coords(const Tensor& phi) { return semiconvolve(phi, additive_mixing); }

EmbeddingField convolutional_field(const Tensor& phi) {
  require_field(phi);
  return {phi, FieldKind::convolutional};
}

Tensor recover_phi(const EmbeddingField& field) {
  if (field.kind != FieldKind::semiconvolutional) return field.values;
  return sub(field.values, padded_coords(field.dims(), field.height(), field.width()));
}

Tensor displacement_field(const EmbeddingField& field) {
  if (field.kind != FieldKind::semiconvolutional) {
    throw std::invalid_argument("displacement_field: field is convolutional");
  }
  return sub(slice(field.values, 0, 0, 2), coord_grid(field.height(), field.width()));
}

std::vector<double> endpoint_spread(const EmbeddingField& field, const InstanceLabeling& gt) {
  if (field.kind != FieldKind::semiconvolutional) throw std::invalid_argument("endpoint_spread: field is convolutional");
  if (gt.height != field.height() || gt.width != field.width()) throw ShapeError("endpoint_spread: grid mismatch");
  const std::size_t plane = gt.pixels();
  const auto data = field.values.data();
  std::vector<double> out;
  for (const auto& pixels : gt.instance_pixels()) {
    double mx = 0.0, my = 0.0;
    for (std::size_t p : pixels) {
      mx += data[p];
      my += data[plane + p];
    }
    mx /= static_cast<double>(pixels.size());
    my /= static_cast<double>(pixels.size());
    double acc = 0.0;
    for (std::size_t p : pixels) {
      const double dx = data[p] - mx, dy = data[plane + p] - my;
      acc += dx * dx + dy * dy;
    }
    out.push_back(std::sqrt(acc / static_cast<double>(pixels.size())));
  }
  return out;
}

MarginReport check_margin(const EmbeddingField& field, const InstanceLabeling& gt, double margin,
                          std::size_t sample_pairs, std::uint64_t seed) {
  if (!(margin > 0.0 && margin < 1.0)) throw DomainError("check_margin: margin must lie in (0, 1)");
  if (gt.height != field.height() || gt.width != field.width()) throw ShapeError("check_margin: grid mismatch");
  if (gt.count < 2) throw std::invalid_argument("check_margin: need at least two foreground instances");
  if (sample_pairs == 0) throw std::invalid_argument("check_margin: sample_pairs must be positive");

  const auto instances = gt.instance_pixels();
  Rng rng(seed);
  std::size_t within = 0, between = 0;
  for (std::size_t i = 0; i < sample_pairs; ++i) {
    const auto& s = instances[rng.index(instances.size())];
    const std::size_t u = s[rng.index(s.size())], v = s[rng.index(s.size())];
    if (distance(field, u, v) <= 1.0 - margin) ++within;

    const std::size_t a = rng.index(instances.size());
    std::size_t b = rng.index(instances.size() - 1);
    if (b >= a) ++b;
    const std::size_t p = instances[a][rng.index(instances[a].size())];
    const std::size_t q = instances[b][rng.index(instances[b].size())];
    if (distance(field, p, q) >= 1.0 + margin) ++between;
  }
  const double n = static_cast<double>(sample_pairs);
  return {static_cast<double>(within) / n, static_cast<double>(between) / n, sample_pairs};
}

}  // namespace semiconv
