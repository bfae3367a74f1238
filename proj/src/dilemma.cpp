#include "semiconv/dilemma.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "semiconv/errors.hpp"
#include "semiconv/rng.hpp"

namespace semiconv {

namespace {

bool is_integral(double v) { return std::abs(v - std::round(v)) < 1e-9; }

long nearest_center_index(double u) {
  // Nearest k with |u - 2k| minimal; exact ties go to the lower k.
  return static_cast<long>(std::ceil(u / 2.0 - 0.5));
}

}  // namespace

std::size_t PeriodicSignal1D::samples_per_period() const {
  return static_cast<std::size_t>(std::llround(period / step));
}

bool PeriodicSignal1D::is_boundary(std::size_t i) const {
  const std::size_t m = samples_per_period();
  return m % 2 == 0 && i % m == m / 2;
}

PeriodicSignal1D make_signal(double half_extent, double step) {
  if (!(step > 0.0) || !is_integral(PeriodicSignal1D::period / step)) {
    throw DomainError("make_signal: step must divide the period 2 evenly");
  }
  if (!(half_extent > 0.0) || !is_integral(half_extent / 2.0)) {
    throw DomainError("make_signal: half extent must be a positive multiple of 2");
  }
  PeriodicSignal1D sig;
  sig.half_extent = half_extent;
  sig.step = step;
  const std::size_t m = sig.samples_per_period();
  if (m < 2) throw DomainError("make_signal: need at least two samples per period");
  const auto periods = static_cast<std::size_t>(std::llround(half_extent));  // 2L / 2
  const std::size_t n = periods * m + 1;

  // One period starting at a peak, then tiled: periodicity is exact.
  std::vector<double> base(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = static_cast<double>(i) * step;  // offset from the peak, in [0, 2)
    base[i] = t <= 1.0 ? 1.0 - t : t - 1.0;
  }
  sig.positions.resize(n);
  sig.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sig.positions[i] = -half_extent + static_cast<double>(i) * step;
    sig.samples[i] = base[i % m];
  }
  return sig;
}

std::vector<double> semiconv_color(const PeriodicSignal1D& signal) {
  const auto circle = signal.periodic_samples();
  const std::size_t n = circle.size();
  std::vector<double> color(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const std::size_t c = i % n;
    const double slope = (circle[(c + 1) % n] - circle[(c + n - 1) % n]) / (2.0 * signal.step);
    color[i] = signal.positions[i] + (1.0 - signal.samples[i]) * slope;
  }
  return color;
}

long region_of_color(double color) { return nearest_center_index(color); }

std::vector<long> ground_truth_regions(const PeriodicSignal1D& signal) {
  std::vector<long> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = nearest_center_index(signal.positions[i]);
  return out;
}

ConvStack1D::ConvStack1D(std::vector<std::size_t> channels, std::size_t kernel, std::uint64_t seed, Padding padding)
    : kernel_(kernel), padding_(padding) {
  if (channels.empty()) throw std::invalid_argument("conv stack: at least one layer required");
  if (kernel % 2 == 0) throw std::invalid_argument("conv stack: kernel must be odd");
  Rng rng(seed);
  std::size_t cin = 1;
  for (std::size_t cout : channels) {
    std::vector<double> w(cout * cin * kernel * kernel), b(cout);
    for (double& v : w) v = rng.uniform(-1.0, 1.0) / static_cast<double>(kernel);
    for (double& v : b) v = rng.uniform(-0.5, 0.5);
    weights_.emplace_back(Shape{cout, cin, kernel, kernel}, std::move(w));
    biases_.emplace_back(Shape{cout}, std::move(b));
    cin = cout;
  }
}

std::vector<std::vector<double>> ConvStack1D::operator()(std::span<const double> samples) const {
  // A k x k kernel over a 1 x N circular signal acts as a 1-D circular convolution.
  Tensor h(Shape{1, 1, samples.size()}, std::vector<double>(samples.begin(), samples.end()));
  const Conv2dOptions opt{.stride = 1, .padding = padding_, .pad = (kernel_ - 1) / 2};
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = conv2d(h, weights_[l], biases_[l], opt);
    if (l + 1 < weights_.size()) h = relu(h);
  }
  std::vector<std::vector<double>> out(h.dim(0), std::vector<double>(h.dim(2)));
  for (std::size_t c = 0; c < h.dim(0); ++c)
    for (std::size_t i = 0; i < h.dim(2); ++i) out[c][i] = h[c * h.dim(2) + i];
  return out;
}

double conv_collision_witness(const PeriodicSignal1D& signal, const SignalOperator& op) {
  const auto circle = signal.periodic_samples();
  const auto out = op(circle);
  double spread = 0.0;
  for (const auto& channel : out) {
    if (channel.size() != circle.size()) throw ShapeError("conv_collision_witness: operator changed signal length");
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < circle.size(); ++i) {
      if (!signal.is_peak(i)) continue;
      lo = std::min(lo, channel[i]);
      hi = std::max(hi, channel[i]);
    }
    spread = std::max(spread, hi - lo);
  }
  return spread;
}

double conv_collision_witness(const PeriodicSignal1D& signal, const ConvStack1D& stack) {
  if (stack.padding() != Padding::circular) {
    throw std::invalid_argument("conv_collision_witness: stack must use circular padding");
  }
  return conv_collision_witness(signal, [&stack](std::span<const double> s) { return stack(s); });
}

std::vector<double> pv_verify(const PeriodicSignal1D& signal) {
  std::vector<double> centers;
  for (std::size_t i = 0; i < signal.size(); ++i)
    if (signal.samples[i] == 1.0) centers.push_back(signal.positions[i]);
  return centers;
}

std::vector<double> pv_verify_thresholded(const PeriodicSignal1D& signal) {
  std::vector<double> centers;
  const double threshold = 1.0 - signal.step / 2.0;
  for (std::size_t i = 0; i < signal.size(); ++i)
    if (signal.samples[i] > threshold) centers.push_back(signal.positions[i]);
  return centers;
}

DilemmaReport run_dilemma(double half_extent, double step, std::uint64_t seed, std::size_t stacks) {
  const PeriodicSignal1D sig = make_signal(half_extent, step);
  DilemmaReport report;

  const auto color = semiconv_color(sig);
  const auto regions = ground_truth_regions(sig);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (sig.is_boundary(i)) continue;
    report.max_semiconv_error =
        std::max(report.max_semiconv_error, std::abs(color[i] - 2.0 * static_cast<double>(regions[i])));
  }

  Rng rng(seed);
  for (std::size_t s = 0; s < stacks; ++s) {
    const ConvStack1D stack({8, 8, 4}, 3, rng.next());
    report.max_conv_spread = std::max(report.max_conv_spread, conv_collision_witness(sig, stack));
  }

  report.centers = pv_verify(sig);
  report.n_regions = std::set<long>(regions.begin(), regions.end()).size();
  return report;
}

}  // namespace semiconv
