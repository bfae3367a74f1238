#include <cmath>
#include <vector>

#include "doctest.h"
#include "semiconv/errors.hpp"
#include "semiconv/gradcheck.hpp"
#include "semiconv/kernels.hpp"
#include "semiconv/losses.hpp"
#include "semiconv/ops.hpp"
#include "semiconv/rng.hpp"

using namespace semiconv;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor(Shape{rows.size(), rows[0].size()}, flat);
}

}  // namespace

TEST_CASE("gaussian kernel examples") {
  const std::vector<double> a{1.0, -2.0, 0.5};
  CHECK(gaussian_kernel(a, a) == 1.0);
  const std::vector<double> b{0.0, 0.0}, c{1.0, 1.0};
  CHECK(gaussian_kernel(b, c) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_kernel(a, b), ShapeError);
}

TEST_CASE("steered laplacian examples") {
  const std::vector<double> a{0.3, 0.4}, z{0.0, 0.0};
  CHECK(steered_laplacian(a, a, 0.7) == 1.0);
  CHECK(steered_laplacian(a, z, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK_THROWS_AS(steered_laplacian(a, z, 0.0), DomainError);
  CHECK_THROWS_AS(steered_laplacian(a, z, -1.0), DomainError);
}

TEST_CASE("steered laplacian decreases strictly with distance") {
  const std::vector<double> origin{0.0, 0.0, 0.0};
  double last = 2.0;
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> b{0.1 * i, 0.0, 0.0};
    const double k = steered_laplacian(origin, b, 1.3);
    CHECK(k < last);
    CHECK(k > 0.0);
    last = k;
  }
}

TEST_CASE("factorized kernel equals the gaussian on augmented embeddings") {
  Rng rng(17);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::array<double, 2> u{rng.uniform(0, 64), rng.uniform(0, 64)}, v{rng.uniform(0, 64), rng.uniform(0, 64)};
    // Keep the two points close enough that the kernel is not vanishingly small.
    const auto gu = random_vec(rng, 2), gv = random_vec(rng, 2);
    const std::array<double, 2> v2{u[0] + rng.uniform(-2, 2), u[1] + rng.uniform(-2, 2)};
    const std::size_t da = rng.index(5);
    const auto au = random_vec(rng, da, -1, 1), av = random_vec(rng, da, -1, 1);
    for (const auto& vv : {v, v2}) {
      std::vector<double> psi_u{u[0] + gu[0], u[1] + gu[1]}, psi_v{vv[0] + gv[0], vv[1] + gv[1]};
      psi_u.insert(psi_u.end(), au.begin(), au.end());
      psi_v.insert(psi_v.end(), av.begin(), av.end());
      worst = std::max(worst, std::abs(factorized_kernel(u, vv, gu, gv, au, av) - gaussian_kernel(psi_u, psi_v)));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("unsteered factorized kernel reduces to the bilateral spatial factor") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::array<double, 2> u{rng.uniform(0, 5), rng.uniform(0, 5)}, v{rng.uniform(0, 5), rng.uniform(0, 5)};
    const std::vector<double> zero{0.0, 0.0}, app{0.3, -1.0};
    const double spatial = std::exp(-0.5 * ((u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1])));
    CHECK(factorized_kernel(u, v, zero, zero, app, app) == doctest::Approx(spatial).epsilon(1e-14));
    CHECK(bilateral_kernel(u, v, app, app) == doctest::Approx(spatial).epsilon(1e-14));
    const auto gu = random_vec(rng, 2), gv = random_vec(rng, 2);
    const std::array<double, 2> su{u[0] + gu[0], u[1] + gu[1]}, sv{v[0] + gv[0], v[1] + gv[1]};
    const std::vector<double> none;
    CHECK(factorized_kernel(u, v, gu, gv, app, app) == doctest::Approx(bilateral_kernel(su, sv, none, none)).epsilon(1e-14));
  }
  const std::vector<double> three{0, 0, 0}, two{0, 0};
  CHECK_THROWS_AS(factorized_kernel({0, 0}, {0, 0}, three, two, two, two), ShapeError);
}

TEST_CASE("all kernels are symmetric, bounded, and 1 at zero distance") {
  Rng rng(21);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 1 + rng.index(6);
    const auto a = random_vec(rng, d), b = random_vec(rng, d);
    const double sigma = rng.uniform(0.1, 3.0);
    CHECK(gaussian_kernel(a, b) == gaussian_kernel(b, a));
    CHECK(steered_laplacian(a, b, sigma) == steered_laplacian(b, a, sigma));
    CHECK(gaussian_kernel(a, a) == 1.0);
    CHECK(steered_laplacian(b, b, sigma) == 1.0);
    for (double k : {gaussian_kernel(a, b), steered_laplacian(a, b, sigma)}) {
      CHECK(k > 0.0);
      CHECK(k <= 1.0);
    }
    const std::array<double, 2> u{a[0], rng.uniform()}, v{b[0], rng.uniform()};
    CHECK(bilateral_kernel(u, v, a, b) == bilateral_kernel(v, u, b, a));
    CHECK(bilateral_kernel(u, u, a, a) == 1.0);
  }
}

TEST_CASE("kernel rows agree with the scalar kernels") {
  Rng rng(8);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(random_vec(rng, 4));
  const auto seed = random_vec(rng, 4);
  const Tensor r = rows_tensor(rows), s(Shape{4}, seed);
  KernelParams lap = KernelParams::laplacian(0.8);
  lap.eps = 0.0;
  KernelParams gauss;
  gauss.family = KernelFamily::gaussian;
  const Tensor kl = exp(log_kernel_row(s, r, lap)), kg = exp(log_kernel_row(s, r, gauss));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(kl[i] == doctest::Approx(steered_laplacian(seed, rows[i], 0.8)).epsilon(1e-14));
    CHECK(kg[i] == doctest::Approx(gaussian_kernel(seed, rows[i])).epsilon(1e-14));
  }
  CHECK_THROWS_AS(log_kernel_row(Tensor::zeros({3}), r, lap), ShapeError);
}

TEST_CASE("bilateral kernel rows use raw positions and appearance channels") {
  Rng rng(9);
  std::vector<std::vector<double>> rows, coords;
  for (int i = 0; i < 5; ++i) {
    rows.push_back(random_vec(rng, 4));
    coords.push_back({double(i), double(2 * i)});
  }
  KernelParams bil;
  bil.family = KernelFamily::bilateral;
  const Tensor r = rows_tensor(rows), c = rows_tensor(coords);
  const Tensor seed(Shape{4}, rows[1]), seed_xy(Shape{2}, coords[1]);
  const Tensor k = exp(log_kernel_row(seed, r, bil, c, seed_xy));
  for (std::size_t i = 0; i < 5; ++i) {
    const std::array<double, 2> u{coords[1][0], coords[1][1]}, v{coords[i][0], coords[i][1]};
    const std::vector<double> au(rows[1].begin() + 2, rows[1].end()), av(rows[i].begin() + 2, rows[i].end());
    CHECK(k[i] == doctest::Approx(bilateral_kernel(u, v, au, av)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(log_kernel_row(seed, r, bil), std::invalid_argument);
}

TEST_CASE("hard seed: fused score at the seed is unchanged") {
  const Tensor s(Shape{2}, {2.0, 0.5});
  const Tensor e(Shape{2, 2}, {0.0, 0.0, 3.0, 4.0});
  KernelParams p = KernelParams::laplacian(5.0);
  p.eps = 0.0;
  const SeedFusionResult r = fuse_scores(s, e, p, SeedMode::hard);
  CHECK(r.seed_index == 0);
  CHECK(r.fused_scores[0] == 2.0);
  CHECK(r.kernel_row[0] == 1.0);
  // distance 5, sigma 5 -> kernel e^-1 -> 0.5 - 1
  CHECK(r.fused_scores[1] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(r.probabilities[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
}

TEST_CASE("hard seed ties go to the lowest index") {
  const Tensor s(Shape{4}, {0.1, 3.0, 3.0, -1.0});
  const SeedFusionResult r = fuse_scores(s, Tensor::zeros({4, 2}), KernelParams::laplacian(1.0), SeedMode::hard);
  CHECK(r.seed_index == 1);
  CHECK(r.seed_weights[1] == 1.0);
}

TEST_CASE("soft seed with equal scores is the mean embedding") {
  const Tensor s = Tensor::full({4}, 1.5);
  const Tensor e(Shape{4, 2}, {0, 0, 2, 0, 0, 4, 2, 4});
  const SeedFusionResult r = fuse_scores(s, e, KernelParams::laplacian(1.0), SeedMode::soft);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.seed_weights[i] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.seed_embedding[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.seed_embedding[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("fusion never raises a score") {
  Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(20), d = 1 + rng.index(5);
    const Tensor s(Shape{n}, random_vec(rng, n, -5, 5));
    const Tensor e(Shape{n, d}, random_vec(rng, n * d));
    const KernelParams p = KernelParams::laplacian(rng.uniform(0.1, 4.0));
    const SeedMode mode = t % 2 ? SeedMode::soft : SeedMode::hard;
    const SeedFusionResult r = fuse_scores(s, e, p, mode);
    for (std::size_t i = 0; i < n; ++i) CHECK(r.fused_scores[i] <= s[i]);
    if (mode == SeedMode::hard) CHECK(r.fused_scores[r.seed_index] == s[r.seed_index]);
  }
}

TEST_CASE("one dominant score makes soft and hard seeds coincide") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 8;
    auto sv = random_vec(rng, n, -1, 1);
    const std::size_t top = rng.index(n);
    sv[top] = 21.0;
    const Tensor s(Shape{n}, sv), e(Shape{n, 3}, random_vec(rng, 3 * n));
    const KernelParams p = KernelParams::laplacian(1.0);
    const auto hard = fuse_scores(s, e, p, SeedMode::hard), soft = fuse_scores(s, e, p, SeedMode::soft);
    for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(hard.seed_embedding[d] - soft.seed_embedding[d]) < 1e-6);
  }
}

TEST_CASE("soft fusion is continuous in the scores") {
  Rng rng(6);
  const std::size_t n = 10;
  const Tensor e(Shape{n, 3}, random_vec(rng, 3 * n));
  const auto sv = random_vec(rng, n);
  const KernelParams p = KernelParams::laplacian(0.9);
  const auto base = fuse_scores(Tensor(Shape{n}, sv), e, p, SeedMode::soft);
  for (double delta : {1e-3, 1e-5}) {
    auto moved = sv;
    for (double& v : moved) v += delta * rng.uniform(-1, 1);
    const auto r = fuse_scores(Tensor(Shape{n}, moved), e, p, SeedMode::soft);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.fused_scores[i] - base.fused_scores[i]) < 100 * delta);
  }
}

TEST_CASE("fusion errors") {
  const KernelParams p = KernelParams::laplacian(1.0);
  CHECK_THROWS_AS(fuse_scores(Tensor::zeros({0}), Tensor::zeros({0, 2}), p, SeedMode::hard), std::invalid_argument);
  CHECK_THROWS_AS(fuse_scores(Tensor::zeros({3}), Tensor::zeros({2, 2}), p, SeedMode::hard), ShapeError);
  CHECK_THROWS_AS(KernelParams::laplacian(0.0), DomainError);
}

TEST_CASE("sigma is stored in log space and stays positive") {
  const KernelParams p = KernelParams::laplacian(2.5, true);
  CHECK(p.log_sigma.item() == doctest::Approx(std::log(2.5)).epsilon(1e-15));
  CHECK(p.sigma() == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(p.log_sigma.requires_grad());
  KernelParams q;
  CHECK(q.sigma() == 1.0);
  q.log_sigma = Tensor::scalar(-50.0);
  CHECK(q.sigma() > 0.0);
}

TEST_CASE("BCE on logistic fused scores is differentiable through sigma") {
  Rng rng(10);
  const std::size_t n = 7;
  const Tensor s(Shape{n}, random_vec(rng, n)), e(Shape{n, 3}, random_vec(rng, 3 * n));
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = static_cast<std::uint8_t>(rng.index(2));
  for (SeedMode mode : {SeedMode::hard, SeedMode::soft}) {
    auto f = [&](const Tensor& ls) {
      KernelParams p;
      p.log_sigma = ls;
      return mask_bce(fuse_scores(s, e, p, mode).probabilities, m);
    };
    CHECK(grad_check(f, Tensor::scalar(0.2)) < 1e-4);
  }
}
