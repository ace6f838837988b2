#include "hiergen/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace hiergen {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

static std::size_t checked_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(checked_numel(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (checked_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor data size " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank-2, shape " + shape_str(shape()));
  return dim(0);
}

int Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank-2, shape " + shape_str(shape()));
  return dim(1);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar, shape " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() {
  if (impl_->has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double x : impl_->data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Tensor::backward() const { Graph::active().backward(*this); }

Graph& Graph::active() {
  thread_local Graph g;
  return g;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  for (Entry& e : entries_) {
    if (e.out->has_grad()) std::fill(e.out->grad.begin(), e.out->grad.end(), 0.0);
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace hiergen
