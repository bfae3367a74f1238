#pragma once

#include <functional>

#include "semiconv/tensor.hpp"

namespace semiconv {

using ScalarFunction = std::function<Tensor(const Tensor&)>;

/// Compares the reverse-mode gradient of `f` at `x` against central differences
/// with step `h` and returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
/// `f` must return a one-element tensor; h must lie in [1e-6, 1e-3].
double grad_check(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

}  // namespace semiconv
