#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hiergen/rng.hpp"

namespace hiergen {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, zero-filled
  bool requires_grad = false;

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Dense tensor of doubles, row-major, with an optional gradient slot.
// Value-semantics handle; copies share the underlying buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int numel() const { return static_cast<int>(impl_->data.size()); }
  int rows() const;  // rank-2 only
  int cols() const;

  double item() const;  // numel == 1
  double at(int i) const { return impl_->data[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const { return impl_->data[static_cast<std::size_t>(r) * cols() + c]; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  // Accumulated gradient, zero-allocated on first access.
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad();

  // Reverse pass from a scalar through the active graph. Grads of
  // requires_grad leaves accumulate; repeated calls without zero_grad add up.
  void backward() const;

  bool all_finite() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. Ops recorded during the forward pass are replayed in
// exact reverse order by backward(). One graph per thread; ops record onto
// the calling thread's active graph.
//
// backward() zeroes the grads of recorded op outputs before replaying, so
// grads of leaves accumulate across calls while intermediates stay clean.
class Graph {
 public:
  static Graph& active();

  void record(std::shared_ptr<TensorImpl> out, std::function<void()> backward_fn) {
    entries_.push_back({std::move(out), std::move(backward_fn)});
  }
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<TensorImpl> out;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
};

bool grad_enabled();

// Disables tape recording within a scope (decoding, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- ops ----------------------------------------------------------------
// Every op computes eagerly and, when grad is enabled and an input requires
// grad, records its adjoint rule on the active graph.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// matrix [m x n] plus bias vector [n], broadcast over rows
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor concat(const std::vector<Tensor>& tensors, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);       // -> scalar
Tensor mean_all(const Tensor& a);  // -> scalar
Tensor mean_rows(const Tensor& a);  // [m x n] -> [n], mean over rows

// rows of an embedding table; backward scatter-adds
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
// vector [n] tiled to [m x n]; backward sums over rows
Tensor tile_rows(const Tensor& v, int m);

Tensor softmax(const Tensor& v);        // rank-1
Tensor softmax_rows(const Tensor& a);   // rank-2, per row
Tensor sparsemax(const Tensor& v);      // rank-1, simplex projection

// mean negative log-likelihood of targets under row-wise softmax(logits)
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-9);

// rank-1 <-> rank-2 conveniences
Tensor as_row(const Tensor& v);                 // [n] -> [1 x n]
Tensor as_vector(const Tensor& a);              // [1 x n] or [m x 1] -> [k]
Tensor row(const Tensor& a, int r);             // [m x n] -> [n]
Tensor matvec(const Tensor& a, const Tensor& v);   // [m x n] * [n] -> [m]
Tensor vecmat(const Tensor& v, const Tensor& a);   // [m] * [m x n] -> [n]
Tensor dot(const Tensor& a, const Tensor& b);      // [n] . [n] -> scalar

int argmax(const Tensor& v);

}  // namespace hiergen
