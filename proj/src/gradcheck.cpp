#include "semiconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "semiconv/errors.hpp"

namespace semiconv {

double grad_check(const ScalarFunction& f, const Tensor& x, double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw DomainError("grad_check: step must lie in [1e-6, 1e-3]");
  const std::vector<double> base(x.data().begin(), x.data().end());

  Tensor leaf(x.shape(), base, true);
  const Tensor y = f(leaf);
  if (y.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued, got " + to_string(y.shape()));
  std::vector<double> analytic(base.size(), 0.0);
  if (y.requires_grad()) {
    y.backward();
    analytic = leaf.grad();
  }

  double worst = 0.0;
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + h;
    const double up = f(Tensor(x.shape(), probe)).item();
    probe[i] = base[i] - h;
    const double down = f(Tensor(x.shape(), probe)).item();
    probe[i] = base[i];
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace semiconv
