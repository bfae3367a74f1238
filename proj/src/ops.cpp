#include "semiconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <string_view>

#include "semiconv/errors.hpp"

namespace semiconv {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(std::string_view op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in forward result");
  }
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool needs = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                   [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Shape broadcast_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " + to_string(b.shape()));
}

// f(x, y) forward; dfa/dfb(x, y, out) local partial derivatives.
template <class F, class DA, class DB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  Shape shape = broadcast_shape(op, a, b);
  const std::size_t n = numel(shape);
  const bool a_scalar = a.numel() == 1 && n != 1;
  const bool b_scalar = b.numel() == 1 && n != 1;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  return make_result(op, std::move(shape), std::move(out), {a.node(), b.node()},
                     [a_scalar, b_scalar, dfa, dfb](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const std::size_t count = self.value.size();
                       for (std::size_t i = 0; i < count; ++i) {
                         const double g = self.grad[i];
                         const std::size_t ia = a_scalar ? 0 : i;
                         const std::size_t ib = b_scalar ? 0 : i;
                         const double x = pa.value[ia];
                         const double y = pb.value[ib];
                         if (pa.requires_grad) pa.ensure_grad()[ia] += g * dfa(x, y, self.value[i]);
                         if (pb.requires_grad) pb.ensure_grad()[ib] += g * dfb(x, y, self.value[i]);
                       }
                     });
}

// f(x) forward; df(x, out) local derivative.
template <class F, class D>
Tensor unary(std::string_view op, const Tensor& a, F f, D df) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(op, a.shape(), std::move(out), {a.node()}, [df](Node& self) {
    Node& pa = *self.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += self.grad[i] * df(pa.value[i], self.value[i]);
  });
}

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("log: negative input");
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("sqrt: negative input");
  }
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo > hi");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b) {
  auto rhs = [&]() -> const Tensor& {
    if (!b) throw std::invalid_argument("elementwise: binary op requires a second operand");
    return *b;
  };
  switch (op) {
    case ElementwiseOp::add: return add(a, rhs());
    case ElementwiseOp::sub: return sub(a, rhs());
    case ElementwiseOp::mul: return mul(a, rhs());
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::sqrt: return sqrt(a);
  }
  throw std::invalid_argument("elementwise: unknown op");
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Conv2dOptions& options) {
  return conv2d(input, weight, std::nullopt, options);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv2dOptions& options, std::span<const std::uint8_t> active) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + to_string(input.shape()));
  if (weight.rank() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,kh,kw]");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                     std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (options.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (bias && bias->shape() != Shape{cout}) throw ShapeError("conv2d: bias must be [Cout]");
  const std::size_t pad = options.pad;
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  if (kh > ph || kw > pw) throw ShapeError("conv2d: kernel larger than padded input");
  const std::size_t stride = options.stride;
  const std::size_t oh = (ph - kh) / stride + 1, ow = (pw - kw) / stride + 1;
  const std::size_t opix = oh * ow;
  if (!active.empty() && active.size() != opix) throw ShapeError("conv2d: active mask size mismatch");

  // source[p] is the input index feeding padded position p, or npos for zero padding.
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  auto source = std::make_shared<std::vector<std::size_t>>(cin * ph * pw, npos);
  auto padded = std::make_shared<std::vector<double>>(cin * ph * pw, 0.0);
  const auto x = input.data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t py = 0; py < ph; ++py) {
      const auto sy = static_cast<std::ptrdiff_t>(py) - static_cast<std::ptrdiff_t>(pad);
      for (std::size_t px = 0; px < pw; ++px) {
        const auto sx = static_cast<std::ptrdiff_t>(px) - static_cast<std::ptrdiff_t>(pad);
        std::size_t src = npos;
        if (options.padding == Padding::circular) {
          src = (c * h + wrap(sy, h)) * w + wrap(sx, w);
        } else if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx < static_cast<std::ptrdiff_t>(w)) {
          src = (c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx);
        }
        const std::size_t p = (c * ph + py) * pw + px;
        (*source)[p] = src;
        if (src != npos) (*padded)[p] = x[src];
      }
    }
  }

  const std::size_t k = cin * kh * kw;
  // Patch offsets relative to the top-left corner of the receptive field.
  auto offsets = std::make_shared<std::vector<std::size_t>>(k);
  {
    std::size_t idx = 0;
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) (*offsets)[idx++] = (c * ph + ky) * pw + kx;
  }
  auto mask = std::make_shared<std::vector<std::uint8_t>>(active.begin(), active.end());

  const auto wv = weight.data();
  const auto bv = bias ? bias->data() : std::span<const double>{};
  std::vector<double> out(cout * opix, 0.0);
  parallel_for(opix, [&](std::size_t begin, std::size_t end) {
    std::vector<double> patch(k);
    for (std::size_t p = begin; p < end; ++p) {
      if (!mask->empty() && !(*mask)[p]) continue;
      const std::size_t base = (p / ow) * stride * pw + (p % ow) * stride;
      for (std::size_t i = 0; i < k; ++i) patch[i] = (*padded)[base + (*offsets)[i]];
      for (std::size_t co = 0; co < cout; ++co) {
        const double* wr = wv.data() + co * k;
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += wr[i] * patch[i];
        out[co * opix + p] = acc + (bv.empty() ? 0.0 : bv[co]);
      }
    }
  });

  std::vector<NodePtr> parents{input.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  return make_result(
      "conv2d", Shape{cout, oh, ow}, std::move(out), std::move(parents),
      [=](Node& self) {
        Node& in = *self.parents[0];
        Node& wt = *self.parents[1];
        Node* bs = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const bool need_in = in.requires_grad;
        const bool need_w = wt.requires_grad;
        const bool need_b = bs && bs->requires_grad;
        std::vector<double> grad_padded(need_in ? padded->size() : 0, 0.0);
        double* gw = need_w ? wt.ensure_grad().data() : nullptr;
        double* gb = need_b ? bs->ensure_grad().data() : nullptr;
        std::vector<double> patch(k), gpatch(k);
        for (std::size_t p = 0; p < opix; ++p) {
          if (!mask->empty() && !(*mask)[p]) continue;
          const std::size_t base = (p / ow) * stride * pw + (p % ow) * stride;
          if (need_w) {
            for (std::size_t i = 0; i < k; ++i) patch[i] = (*padded)[base + (*offsets)[i]];
          }
          if (need_in) std::fill(gpatch.begin(), gpatch.end(), 0.0);
          for (std::size_t co = 0; co < cout; ++co) {
            const double g = self.grad[co * opix + p];
            if (g == 0.0) continue;
            if (need_b) gb[co] += g;
            if (need_w) {
              double* gr = gw + co * k;
              for (std::size_t i = 0; i < k; ++i) gr[i] += g * patch[i];
            }
            if (need_in) {
              const double* wr = wt.value.data() + co * k;
              for (std::size_t i = 0; i < k; ++i) gpatch[i] += g * wr[i];
            }
          }
          if (need_in) {
            for (std::size_t i = 0; i < k; ++i) grad_padded[base + (*offsets)[i]] += gpatch[i];
          }
        }
        if (need_in) {
          auto& gi = in.ensure_grad();
          for (std::size_t q = 0; q < grad_padded.size(); ++q) {
            if ((*source)[q] != npos) gi[(*source)[q]] += grad_padded[q];
          }
        }
      });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::span<const std::size_t> axes) {
  const Shape& shape = a.shape();
  const std::size_t rank = shape.size();
  std::vector<bool> reduced(rank, axes.empty());
  for (std::size_t axis : axes) {
    if (axis >= rank) throw ShapeError("reduce: axis out of range");
    if (reduced[axis]) throw ShapeError("reduce: duplicate axis");
    reduced[axis] = true;
  }
  std::size_t count = 1;
  Shape out_shape;
  for (std::size_t i = 0; i < rank; ++i) {
    if (reduced[i]) {
      if (shape[i] == 0) throw ShapeError("reduce: empty reduction axis");
      count *= shape[i];
    } else {
      out_shape.push_back(shape[i]);
    }
  }
  if (a.numel() == 0) throw ShapeError("reduce: empty reduction axis");
  if (out_shape.empty()) out_shape.push_back(1);

  // Output stride of each input axis (0 for reduced axes).
  std::vector<std::size_t> out_stride(rank, 0);
  {
    std::size_t s = 1;
    for (std::size_t i = rank; i-- > 0;) {
      if (!reduced[i]) {
        out_stride[i] = s;
        s *= shape[i];
      }
    }
  }
  auto map = std::make_shared<std::vector<std::size_t>>(a.numel());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t oi = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    (*map)[i] = oi;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      oi += out_stride[ax];
      if (counter[ax] < shape[ax]) break;
      oi -= out_stride[ax] * shape[ax];
      counter[ax] = 0;
    }
  }
  const double factor = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<double> out(numel(out_shape), 0.0);
  const auto av = a.data();
  for (std::size_t i = 0; i < av.size(); ++i) out[(*map)[i]] += av[i];
  if (op == ReduceOp::mean) {
    for (double& v : out) v *= factor;
  }
  return make_result(op == ReduceOp::mean ? "mean" : "sum", std::move(out_shape), std::move(out), {a.node()},
                     [map, factor](Node& self) {
                       auto& ga = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[(*map)[i]] * factor;
                     });
}

Tensor sum(const Tensor& a) { return reduce(ReduceOp::sum, a); }
Tensor mean(const Tensor& a) { return reduce(ReduceOp::mean, a); }

Tensor sum(const Tensor& a, std::size_t axis) {
  const std::size_t axes[] = {axis};
  return reduce(ReduceOp::sum, a, axes);
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const std::size_t axes[] = {axis};
  return reduce(ReduceOp::mean, a, axes);
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const Shape& shape = a.shape();
  if (axis >= shape.size()) throw ShapeError("softmax: axis out of range");
  const std::size_t n = shape[axis];
  if (n == 0) throw ShapeError("softmax: empty reduction axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, av[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(av[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result("softmax", shape, std::move(out), {a.node()}, [outer, inner, n](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          ga[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor l2norm_rows(const Tensor& a, double eps) {
  if (a.rank() != 2) throw ShapeError("l2norm_rows: expected [N,D], got " + to_string(a.shape()));
  if (!(eps >= 0.0)) throw DomainError("l2norm_rows: eps must be non-negative");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (cols == 0) throw ShapeError("l2norm_rows: empty reduction axis");
  const auto av = a.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += av[r * cols + c] * av[r * cols + c];
    out[r] = std::sqrt(acc + eps);
  }
  return make_result("l2norm_rows", Shape{rows}, std::move(out), {a.node()}, [cols](Node& self) {
    Node& pa = *self.parents[0];
    auto& ga = pa.ensure_grad();
    for (std::size_t r = 0; r < self.value.size(); ++r) {
      const double y = self.value[r];
      if (y == 0.0) continue;
      const double g = self.grad[r] / y;
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g * pa.value[r * cols + c];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = av[r * cols + c];
  return make_result("transpose", Shape{cols, rows}, std::move(out), {a.node()}, [rows, cols](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += self.grad[c * rows + r];
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& shape = a.shape();
  if (axis >= shape.size()) throw ShapeError("slice: axis out of range");
  if (begin > end || end > shape[axis]) throw ShapeError("slice: range out of bounds");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis], m = end - begin;
  Shape out_shape = shape;
  out_shape[axis] = m;
  const auto av = a.data();
  std::vector<double> out(outer * m * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(av.data() + (o * n + begin) * inner, m * inner, out.data() + o * m * inner);
  return make_result("slice", std::move(out_shape), std::move(out), {a.node()},
                     [outer, inner, n, m, begin](Node& self) {
                       auto& ga = self.parents[0]->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t i = 0; i < m * inner; ++i)
                           ga[(o * n + begin) * inner + i] += self.grad[o * m * inner + i];
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.rank() != 1 && a.rank() != 2) throw ShapeError("gather_rows: expected rank 1 or 2");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.rank() == 2 ? a.dim(1) : 1;
  for (std::size_t idx : indices) {
    if (idx >= rows) throw ShapeError("gather_rows: index out of range");
  }
  auto picked = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  const auto av = a.data();
  std::vector<double> out(picked->size() * cols);
  for (std::size_t r = 0; r < picked->size(); ++r)
    std::copy_n(av.data() + (*picked)[r] * cols, cols, out.data() + r * cols);
  Shape out_shape = a.rank() == 2 ? Shape{picked->size(), cols} : Shape{picked->size()};
  return make_result("gather_rows", std::move(out_shape), std::move(out), {a.node()}, [picked, cols](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < picked->size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[(*picked)[r] * cols + c] += self.grad[r * cols + c];
  });
}

Tensor expand_rows(const Tensor& a, std::size_t n) {
  const bool ok = a.rank() == 1 || (a.rank() == 2 && a.dim(0) == 1);
  if (!ok) throw ShapeError("expand_rows: expected [D] or [1,D], got " + to_string(a.shape()));
  const std::size_t cols = a.numel();
  const auto av = a.data();
  std::vector<double> out(n * cols);
  for (std::size_t r = 0; r < n; ++r) std::copy_n(av.data(), cols, out.data() + r * cols);
  return make_result("expand_rows", Shape{n, cols}, std::move(out), {a.node()}, [n, cols](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[c] += self.grad[r * cols + c];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < kk; ++p) {
      const double x = av[i * kk + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  return make_result("matmul", Shape{m, n}, std::move(out), {a.node(), b.node()}, [m, kk, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * pb.value[p * n + j];
          ga[i * kk + p] += acc;
        }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) {
          const double x = pa.value[i * kk + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * self.grad[i * n + j];
        }
    }
  });
}

Tensor grad_scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("grad_scale", a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

}  // namespace semiconv
