#include "semiconv/gradsuite.hpp"

#include <algorithm>

#include "semiconv/embedding.hpp"
#include "semiconv/gradcheck.hpp"
#include "semiconv/kernels.hpp"
#include "semiconv/losses.hpp"
#include "semiconv/ops.hpp"
#include "semiconv/rng.hpp"

namespace semiconv {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Fixed random projection to a scalar, so every output entry feeds the check.
Tensor project(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

double check_conv(Rng& rng, double h) {
  const std::size_t cin = 1 + rng.index(3), cout = 1 + rng.index(3);
  const std::size_t k = rng.index(2) ? 3 : 1;
  const std::size_t height = 4 + rng.index(3), width = 4 + rng.index(3);
  const Conv2dOptions opt{.stride = 1 + rng.index(2),
                          .padding = rng.index(2) ? Padding::circular : Padding::zero,
                          .pad = (k - 1) / 2};
  const Tensor x = random_tensor(rng, {cin, height, width});
  const Tensor w = random_tensor(rng, {cout, cin, k, k});
  const Tensor b = random_tensor(rng, {cout});
  const Tensor probe = random_tensor(rng, conv2d(x, w, b, opt).shape());
  double err = grad_check([&](const Tensor& v) { return project(conv2d(v, w, b, opt), probe); }, x, h);
  err = std::max(err, grad_check([&](const Tensor& v) { return project(conv2d(x, v, b, opt), probe); }, w, h));
  err = std::max(err, grad_check([&](const Tensor& v) { return project(conv2d(x, w, v, opt), probe); }, b, h));
  return err;
}

double check_pull(Rng& rng, double h) {
  const std::size_t d = 2 + rng.index(3), height = 3 + rng.index(3), width = 3 + rng.index(3);
  const std::size_t plane = height * width;
  // Random partition into up to three segments plus background, each segment non-empty.
  const std::size_t k = 1 + rng.index(3);
  std::vector<std::size_t> order(plane);
  for (std::size_t i = 0; i < plane; ++i) order[i] = i;
  for (std::size_t i = plane - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  SegmentSet segs;
  segs.segments.resize(k);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::size_t slot = i < k ? i : rng.index(k + 1);
    (slot < k ? segs.segments[slot] : segs.background).push_back(order[i]);
  }
  for (auto& s : segs.segments) std::sort(s.begin(), s.end());
  std::sort(segs.background.begin(), segs.background.end());
  const bool semiconv = rng.index(2) == 1;
  const PullLossOptions opt{.eps = 1e-8, .include_background = rng.index(4) == 0 && !segs.background.empty()};
  const Tensor phi = random_tensor(rng, {d, height, width});
  return grad_check(
      [&](const Tensor& v) {
        return pull_to_mean_loss(semiconv ? attach_coords(v) : convolutional_field(v), segs, opt);
      },
      phi, h);
}

double check_laplacian(Rng& rng, double h) {
  const std::size_t n = 2 + rng.index(6), d = 1 + rng.index(4);
  const Tensor seed = random_tensor(rng, {d});
  const Tensor rows = random_tensor(rng, {n, d});
  const Tensor probe = random_tensor(rng, {n});
  const double log_sigma = rng.uniform(-1.0, 1.0);
  auto params_with = [&](const Tensor& ls) {
    KernelParams p;
    p.log_sigma = ls;
    return p;
  };
  const KernelParams fixed = params_with(Tensor::scalar(log_sigma));
  auto kernel = [&](const Tensor& s, const Tensor& r, const KernelParams& p) {
    return project(exp(log_kernel_row(s, r, p)), probe);
  };
  double err = grad_check([&](const Tensor& v) { return kernel(v, rows, fixed); }, seed, h);
  err = std::max(err, grad_check([&](const Tensor& v) { return kernel(seed, v, fixed); }, rows, h));
  err = std::max(err, grad_check([&](const Tensor& v) { return kernel(seed, rows, params_with(v)); },
                                 Tensor::scalar(log_sigma), h));
  return err;
}

double check_fuse(Rng& rng, double h) {
  const std::size_t n = 2 + rng.index(6), d = 1 + rng.index(4);
  const Tensor scores = random_tensor(rng, {n}, -2.0, 2.0);
  const Tensor emb = random_tensor(rng, {n, d});
  const Tensor probe_s = random_tensor(rng, {n});
  const Tensor probe_p = random_tensor(rng, {n});
  const double log_sigma = rng.uniform(-0.5, 0.5);
  auto run = [&](const Tensor& s, const Tensor& e, double ls_value, const Tensor* ls) {
    KernelParams p;
    p.log_sigma = ls ? *ls : Tensor::scalar(ls_value);
    const SeedFusionResult r = fuse_scores(s, e, p, SeedMode::soft);
    return add(project(r.fused_scores, probe_s), project(r.probabilities, probe_p));
  };
  double err = grad_check([&](const Tensor& v) { return run(v, emb, log_sigma, nullptr); }, scores, h);
  err = std::max(err, grad_check([&](const Tensor& v) { return run(scores, v, log_sigma, nullptr); }, emb, h));
  err = std::max(err, grad_check([&](const Tensor& v) { return run(scores, emb, 0.0, &v); },
                                 Tensor::scalar(log_sigma), h));
  return err;
}

double check_bce(Rng& rng, double h) {
  const std::size_t n = 1 + rng.index(12);
  const Tensor p = random_tensor(rng, {n}, 0.05, 0.95);
  std::vector<std::uint8_t> mask(n);
  for (auto& m : mask) m = static_cast<std::uint8_t>(rng.index(2));
  return grad_check([&](const Tensor& v) { return mask_bce(v, mask); }, p, h);
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, std::size_t instances, double h) {
  using Check = double (*)(Rng&, double);
  const std::pair<const char*, Check> checks[] = {
      {"conv2d", check_conv},
      {"pull_to_mean_loss", check_pull},
      {"steered_laplacian", check_laplacian},
      {"fuse_scores_soft", check_fuse},
      {"mask_bce", check_bce},
  };
  std::vector<GradSuiteEntry> out;
  Rng master(seed);
  for (const auto& [name, check] : checks) {
    GradSuiteEntry e{name, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(master.next());
      e.max_error = std::max(e.max_error, check(rng, h));
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace semiconv
