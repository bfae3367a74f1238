#include "semiconv/kernels.hpp"

#include <cmath>
#include <string>

#include "semiconv/errors.hpp"
#include "semiconv/ops.hpp"

namespace semiconv {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("kernel: dimension mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// sqrt(||d||^2 + eps) - sqrt(eps) per row: smooth at 0 and exactly 0 there.
Tensor smooth_row_distance(const Tensor& diff, double eps) {
  return add_scalar(l2norm_rows(diff, eps), -std::sqrt(eps));
}

}  // namespace

double gaussian_kernel(std::span<const double> a, std::span<const double> b) {
  return std::exp(-0.5 * squared_distance(a, b));
}

double factorized_kernel(std::array<double, 2> u, std::array<double, 2> v, std::span<const double> phi_g_u,
                         std::span<const double> phi_g_v, std::span<const double> phi_a_u,
                         std::span<const double> phi_a_v) {
  if (phi_g_u.size() != 2 || phi_g_v.size() != 2) throw ShapeError("factorized_kernel: geometric parts must be 2-D");
  const std::array<double, 2> su{u[0] + phi_g_u[0], u[1] + phi_g_u[1]};
  const std::array<double, 2> sv{v[0] + phi_g_v[0], v[1] + phi_g_v[1]};
  return std::exp(-0.5 * squared_distance(su, sv)) * std::exp(-0.5 * squared_distance(phi_a_u, phi_a_v));
}

double bilateral_kernel(std::array<double, 2> u, std::array<double, 2> v, std::span<const double> app_u,
                        std::span<const double> app_v) {
  return std::exp(-0.5 * squared_distance(u, v)) * std::exp(-0.5 * squared_distance(app_u, app_v));
}

double steered_laplacian(std::span<const double> a, std::span<const double> b, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("steered_laplacian: sigma must be positive");
  return std::exp(-std::sqrt(squared_distance(a, b)) / sigma);
}

KernelParams KernelParams::laplacian(double sigma, bool learnable) {
  if (!(sigma > 0.0)) throw DomainError("kernel: sigma must be positive");
  KernelParams p;
  p.family = KernelFamily::steered_laplacian;
  p.log_sigma = Tensor::scalar(std::log(sigma), learnable);
  return p;
}

double KernelParams::sigma() const { return std::exp(log_sigma.item()); }

Tensor log_kernel_row(const Tensor& seed, const Tensor& rows, const KernelParams& params,
                      const std::optional<Tensor>& row_coords, const std::optional<Tensor>& seed_coords) {
  if (rows.rank() != 2) throw ShapeError("kernel row: embeddings must be [N,D]");
  if (seed.numel() != rows.dim(1)) throw ShapeError("kernel row: seed dimension does not match embeddings");
  const std::size_t n = rows.dim(0);
  const Tensor diff = sub(rows, expand_rows(reshape(seed, {seed.numel()}), n));
  switch (params.family) {
    case KernelFamily::gaussian:
      return scale(sum(mul(diff, diff), 1), -0.5);
    case KernelFamily::steered_laplacian:
      return neg(div(smooth_row_distance(diff, params.eps), exp(params.log_sigma)));
    case KernelFamily::bilateral: {
      if (!row_coords || !seed_coords) throw std::invalid_argument("kernel row: bilateral kernel needs coordinates");
      if (row_coords->shape() != Shape{n, 2} || seed_coords->numel() != 2) {
        throw ShapeError("kernel row: coordinates must be [N,2] and [2]");
      }
      if (rows.dim(1) < 2) throw ShapeError("kernel row: bilateral kernel needs D >= 2");
      const Tensor spatial = sub(*row_coords, expand_rows(reshape(*seed_coords, {2}), n));
      // Appearance channels follow the two geometric ones.
      const Tensor appearance = slice(diff, 1, 2, rows.dim(1));
      const Tensor total = rows.dim(1) > 2 ? add(sum(mul(spatial, spatial), 1), sum(mul(appearance, appearance), 1))
                                           : sum(mul(spatial, spatial), 1);
      return scale(total, -0.5);
    }
  }
  throw std::invalid_argument("kernel row: unknown family");
}

SeedFusionResult fuse_scores(const Tensor& scores, const Tensor& embeddings, const KernelParams& params,
                             SeedMode mode, const std::optional<Tensor>& coords) {
  if (scores.numel() == 0) throw std::invalid_argument("fuse_scores: empty region");
  if (embeddings.rank() != 2 || embeddings.dim(0) != scores.numel()) {
    throw ShapeError("fuse_scores: embeddings must be [N,D] with N = number of scores");
  }
  const std::size_t n = scores.numel();
  const Tensor s = reshape(scores, {n});

  SeedFusionResult r;
  const auto sv = s.data();
  for (std::size_t i = 1; i < n; ++i)
    if (sv[i] > sv[r.seed_index]) r.seed_index = i;

  std::optional<Tensor> seed_coords;
  if (mode == SeedMode::hard) {
    std::vector<double> onehot(n, 0.0);
    onehot[r.seed_index] = 1.0;
    r.seed_weights = Tensor(Shape{n}, std::move(onehot));
    const std::size_t pick[] = {r.seed_index};
    r.seed_embedding = reshape(gather_rows(embeddings, pick), {embeddings.dim(1)});
    if (coords) seed_coords = reshape(gather_rows(*coords, pick), {2});
  } else {
    r.seed_weights = softmax(s, 0);
    const Tensor p_row = reshape(r.seed_weights, {1, n});
    r.seed_embedding = reshape(matmul(p_row, embeddings), {embeddings.dim(1)});
    if (coords) seed_coords = reshape(matmul(p_row, *coords), {2});
  }
  const Tensor log_k = log_kernel_row(r.seed_embedding, embeddings, params, coords, seed_coords);
  r.kernel_row = exp(log_k);
  r.fused_scores = add(s, log_k);
  r.probabilities = sigmoid(r.fused_scores);
  return r;
}

}  // namespace semiconv
