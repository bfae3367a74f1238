#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "semiconv/tensor.hpp"

namespace semiconv {

// Binary ops accept equal shapes, or one operand with a single element that is
// broadcast against the other.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError on negative input; log(0) is a NumericError.
Tensor log(const Tensor& a);
/// Throws DomainError on negative input.
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

enum class ElementwiseOp { add, sub, mul, relu, exp, log, sqrt };

/// Dispatcher over the elementwise family; unary ops ignore `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

enum class Padding { zero, circular };

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::zero;
  std::size_t pad = 0;
};

/// Cross-correlation of input [C_in,H,W] with weight [C_out,C_in,kh,kw] and an
/// optional bias [C_out]. Output is [C_out,H',W'] with H' = (H+2*pad-kh)/stride+1.
///
/// When `active` is non-empty it must hold H'*W' flags; only flagged output
/// pixels are computed (the rest are zero) and only they propagate gradient.
/// Flagged pixels are bit-identical to the unmasked result.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Conv2dOptions& options);
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv2dOptions& options, std::span<const std::uint8_t> active = {});

enum class ReduceOp { sum, mean };

/// Reduces over `axes` (dropping them). Empty `axes` reduces everything to a
/// one-element tensor.
Tensor reduce(ReduceOp op, const Tensor& a, std::span<const std::size_t> axes = {});
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor softmax(const Tensor& a, std::size_t axis);

/// Row norms sqrt(sum_d a[n,d]^2 + eps) of a [N,D] tensor.
Tensor l2norm_rows(const Tensor& a, double eps);

Tensor reshape(const Tensor& a, Shape shape);
/// Transpose of a rank-2 tensor.
Tensor transpose(const Tensor& a);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows `indices` of a [N,D] tensor (or elements of a [N] tensor).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
/// Repeats a [D] (or [1,D]) tensor into [n,D].
Tensor expand_rows(const Tensor& a, std::size_t n);
Tensor matmul(const Tensor& a, const Tensor& b);

/// Identity forward; backward multiplies the incoming gradient by `factor`.
Tensor grad_scale(const Tensor& a, double factor);

}  // namespace semiconv
