#include "semiconv/tensor.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "semiconv/errors.hpp"

namespace semiconv {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (semiconv::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = semiconv::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{1}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("tensor: axis out of range");
  return node_->shape[axis];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("tensor: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("tensor: index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on non-scalar " + to_string(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return std::vector<double>(numel(), 0.0);
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::assign(std::span<const double> values) {
  if (values.size() != numel()) throw ShapeError("tensor: assign size mismatch");
  if (node_->backward) throw std::logic_error("tensor: assign on a non-leaf tensor");
  std::copy(values.begin(), values.end(), node_->value.begin());
}

Tensor Tensor::detach(bool requires_grad) const { return Tensor(shape(), node_->value, requires_grad); }

void Tensor::backward() const {
  Tape tape(*this);
  tape.backward();
}

Tape::Tape(const Tensor& root) : root_(root.node()) {
  // Iterative post-order DFS yields parents before children.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

std::vector<std::string_view> Tape::ops() const {
  std::vector<std::string_view> names;
  names.reserve(order_.size());
  for (const auto* node : order_) names.push_back(node->op);
  return names;
}

void Tape::backward() {
  if (root_->value.size() != 1) throw ShapeError("backward: root must be a scalar, got " + to_string(root_->shape));
  if (!root_->requires_grad) throw std::logic_error("backward: root does not require grad");
  root_->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

std::size_t thread_budget() {
  static const std::size_t budget = [] {
    const char* env = std::getenv("SEMICONV_THREADS");
    if (!env) return std::size_t{0};
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    return (end == env || v < 0) ? std::size_t{0} : static_cast<std::size_t>(v);
  }();
  return budget;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_budget(), n);
  if (workers <= 1 || n < 64) {
    fn(0, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace semiconv
