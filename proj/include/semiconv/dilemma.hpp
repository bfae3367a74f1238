#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "semiconv/ops.hpp"
#include "semiconv/tensor.hpp"

namespace semiconv {

/// Triangular wave of period 2 sampled on [-L, L] (both ends included), with
/// peaks x = 1 at even u and valleys x = 0 at odd u. The domain is treated as
/// a circle of L periods, so sample n-1 (u = L) coincides with sample 0.
struct PeriodicSignal1D {
  static constexpr double period = 2.0;
  double half_extent = 0.0;
  double step = 0.0;
  std::vector<double> positions;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  /// Samples on the circle (the last, duplicate endpoint dropped).
  std::span<const double> periodic_samples() const { return std::span(samples).first(samples.size() - 1); }
  std::size_t samples_per_period() const;
  bool is_peak(std::size_t i) const { return i % samples_per_period() == 0; }
  bool is_boundary(std::size_t i) const;
};

/// `half_extent` must be a positive multiple of 2 and `step` must divide 2.
PeriodicSignal1D make_signal(double half_extent, double step);

/// u + (1 - x_u) * dx/du with a circular central difference for dx/du.
/// Every interior point of [-1,1] + 2k maps to 2k.
std::vector<double> semiconv_color(const PeriodicSignal1D& signal);

/// Region index k of a color (nearest multiple of 2), ties toward lower k.
long region_of_color(double color);

/// Ground-truth region index of every grid point; boundary points resolve toward lower k.
std::vector<long> ground_truth_regions(const PeriodicSignal1D& signal);

/// Seeded stack of circularly padded convolutions with ReLU between layers,
/// applied to a 1 x N signal. Translation-equivariant by construction.
class ConvStack1D {
 public:
  ConvStack1D(std::vector<std::size_t> channels, std::size_t kernel, std::uint64_t seed,
              Padding padding = Padding::circular);

  /// samples [N] -> channels.back() x N, channel-major.
  std::vector<std::vector<double>> operator()(std::span<const double> samples) const;
  Padding padding() const { return padding_; }

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::size_t kernel_;
  Padding padding_;
};

using SignalOperator = std::function<std::vector<std::vector<double>>(std::span<const double>)>;

/// Largest difference between the outputs of `op` at any two peaks u = 2k, 2k'.
/// `op` receives the periodic samples and must be translation-invariant for the
/// result to vanish.
double conv_collision_witness(const PeriodicSignal1D& signal, const SignalOperator& op);
/// Throws unless the stack uses circular padding.
double conv_collision_witness(const PeriodicSignal1D& signal, const ConvStack1D& stack);

/// Propose-and-verify detector [x_u = 1]: positions of the region centers.
std::vector<double> pv_verify(const PeriodicSignal1D& signal);
/// Discretization-tolerant variant [x_u > 1 - step/2].
std::vector<double> pv_verify_thresholded(const PeriodicSignal1D& signal);

struct DilemmaReport {
  double max_conv_spread = 0.0;
  double max_semiconv_error = 0.0;
  std::vector<double> centers;
  std::size_t n_regions = 0;
};

/// Runs all of the above with `stacks` seeded random conv stacks.
DilemmaReport run_dilemma(double half_extent, double step, std::uint64_t seed, std::size_t stacks = 5);

}  // namespace semiconv
