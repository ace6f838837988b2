#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hiergen/tensor.hpp"

namespace hiergen {

namespace {

bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

// outer x axis x inner decomposition for concat/slice
void axis_blocks(const Shape& s, int axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) {
    inner *= static_cast<std::size_t>(s[i]);
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: operands must be rank-2, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  {
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = B + p * n;
        double* crow = C + i * n;
        for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  if (want_grad(a) || want_grad(b)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, bi, oi, m, k, n] {
      if (!oi->has_grad()) return;
      const double* G = oi->grad.data();
      if (ai->requires_grad) {
        ai->ensure_grad();
        double* dA = ai->grad.data();
        const double* B = bi->data.data();
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const double* grow = G + i * n;
            const double* brow = B + p * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            dA[i * k + p] += acc;
          }
        }
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* dB = bi->grad.data();
        const double* A = ai->data.data();
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* grow = G + i * n;
            double* drow = dB + p * n;
            for (int j = 0; j < n; ++j) drow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose: operand must be rank-2, got " + shape_str(a.shape()));
  }
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  }
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi, m, n] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j * m + i];
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_pointwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.data().size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i], b.data()[i]);
  if (want_grad(a) || want_grad(b)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, bi, oi, n, bwd] {
      if (!oi->has_grad()) return;
      bwd(*ai, *bi, *oi, n);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](TensorImpl& ai, TensorImpl& bi, TensorImpl& oi, std::size_t n) {
        if (ai.requires_grad) {
          ai.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) ai.grad[i] += oi.grad[i];
        }
        if (bi.requires_grad) {
          bi.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) bi.grad[i] += oi.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](TensorImpl& ai, TensorImpl& bi, TensorImpl& oi, std::size_t n) {
        if (ai.requires_grad) {
          ai.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) ai.grad[i] += oi.grad[i];
        }
        if (bi.requires_grad) {
          bi.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) bi.grad[i] -= oi.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](TensorImpl& ai, TensorImpl& bi, TensorImpl& oi, std::size_t n) {
        if (ai.requires_grad) {
          ai.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) ai.grad[i] += oi.grad[i] * bi.data[i];
        }
        if (bi.requires_grad) {
          bi.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) bi.grad[i] += oi.grad[i] * ai.data[i];
        }
      });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.data().size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi, n, s] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ai->grad[i] += s * oi->grad[i];
    });
  }
  return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (a.rank() != 2 || bias.rank() != 1 || bias.dim(0) != a.cols()) {
    throw std::invalid_argument("add_bias: need [m x n] and [n], got " + shape_str(a.shape()) +
                                " and " + shape_str(bias.shape()));
  }
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] + bias.data()[j];
  }
  if (want_grad(a) || want_grad(bias)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = bias.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, bi, oi, m, n] {
      if (!oi->has_grad()) return;
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i) ai->grad[i] += oi->grad[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) bi->grad[j] += oi->grad[i * n + j];
        }
      }
    });
  }
  return out;
}

namespace {

// dfdx receives (x, y) so each op can use whichever is cheaper
template <typename Fwd, typename Dfdx>
Tensor unary_pointwise(const Tensor& a, Fwd fwd, Dfdx dfdx) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.data().size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i]);
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi, n, dfdx] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        ai->grad[i] += oi->grad[i] * dfdx(ai->data[i], oi->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor tanh(const Tensor& a) {
  return unary_pointwise(a, [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_pointwise(a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_pointwise(a,
                         [](double x) {
                           return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                           : std::exp(x) / (1.0 + std::exp(x));
                         },
                         [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_pointwise(a, [](double x) { return std::exp(x); },
                         [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) {
      throw std::domain_error("log: non-positive value " + std::to_string(x));
    }
  }
  return unary_pointwise(a, [](double x) { return std::log(x); },
                         [](double x, double) { return 1.0 / x; });
}

Tensor concat(const std::vector<Tensor>& tensors, int axis) {
  if (tensors.empty()) throw std::invalid_argument("concat: empty input list");
  const Shape& first = tensors[0].shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for rank " +
                                std::to_string(rank));
  }
  int axis_total = 0;
  for (const Tensor& t : tensors) {
    if (t.rank() != rank) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(first) + " vs " +
                                  shape_str(t.shape()));
    }
    for (int i = 0; i < rank; ++i) {
      if (i != axis && t.dim(i) != first[static_cast<std::size_t>(i)]) {
        throw std::invalid_argument("concat: non-axis extent mismatch " + shape_str(first) +
                                    " vs " + shape_str(t.shape()));
      }
    }
    axis_total += t.dim(axis);
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  Tensor out = Tensor::zeros(out_shape);

  std::size_t outer, inner;
  axis_blocks(out_shape, axis, outer, inner);
  std::size_t offset = 0;  // along axis
  bool any_grad = false;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> pieces;  // impl, axis offset
  for (const Tensor& t : tensors) {
    const std::size_t alen = static_cast<std::size_t>(t.dim(axis));
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = t.data().data() + o * alen * inner;
      double* dst = out.data().data() + (o * static_cast<std::size_t>(axis_total) + offset) * inner;
      std::copy(src, src + alen * inner, dst);
    }
    any_grad = any_grad || want_grad(t);
    pieces.emplace_back(t.impl(), offset);
    offset += alen;
  }
  if (any_grad) {
    out.set_requires_grad(true);
    auto oi = out.impl();
    const std::size_t atotal = static_cast<std::size_t>(axis_total);
    Graph::active().record(out.impl(), [oi, pieces, outer, inner, atotal, axis] {
      if (!oi->has_grad()) return;
      for (auto& [pi, off] : pieces) {
        if (!pi->requires_grad) continue;
        pi->ensure_grad();
        const std::size_t alen =
            static_cast<std::size_t>(pi->shape[static_cast<std::size_t>(axis)]);
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = oi->grad.data() + (o * atotal + off) * inner;
          double* dst = pi->grad.data() + o * alen * inner;
          for (std::size_t i = 0; i < alen * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const int rank = a.rank();
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("slice: axis " + std::to_string(axis) + " out of range");
  }
  if (start < 0 || len <= 0 || start + len > a.dim(axis)) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for extent " +
                                std::to_string(a.dim(axis)));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor out = Tensor::zeros(out_shape);
  std::size_t outer, inner;
  axis_blocks(a.shape(), axis, outer, inner);
  const std::size_t alen = static_cast<std::size_t>(a.dim(axis));
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = a.data().data() + (o * alen + static_cast<std::size_t>(start)) * inner;
    double* dst = out.data().data() + o * static_cast<std::size_t>(len) * inner;
    std::copy(src, src + static_cast<std::size_t>(len) * inner, dst);
  }
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi, outer, inner, alen, start, len] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = oi->grad.data() + o * static_cast<std::size_t>(len) * inner;
        double* dst = ai->grad.data() + (o * alen + static_cast<std::size_t>(start)) * inner;
        for (std::size_t i = 0; i < static_cast<std::size_t>(len) * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d > 0 ? d : 0);
  if (n != a.data().size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), a.data());
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  Tensor out = Tensor::scalar(s);
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (double& g : ai->grad) g += oi->grad[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) { return scale(sum(a), 1.0 / a.numel()); }

Tensor mean_rows(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("mean_rows: operand must be rank-2, got " + shape_str(a.shape()));
  }
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.data()[j] += a.data()[i * n + j];
  }
  for (double& x : out.data()) x /= m;
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi, m, n] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j] / m;
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("gather_rows: table must be rank-2, got " + shape_str(table.shape()));
  }
  if (ids.empty()) throw std::invalid_argument("gather_rows: empty id list");
  const int v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::invalid_argument("gather_rows: id " + std::to_string(id) + " out of range [0, " +
                                  std::to_string(v) + ")");
    }
  }
  const int m = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({m, d});
  for (int i = 0; i < m; ++i) {
    const double* src = table.data().data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
    std::copy(src, src + d, out.data().data() + static_cast<std::size_t>(i) * d);
  }
  if (want_grad(table)) {
    out.set_requires_grad(true);
    auto ti = table.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ti, oi, ids, d] {
      if (!oi->has_grad() || !ti->requires_grad) return;
      ti->ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = oi->grad.data() + i * static_cast<std::size_t>(d);
        double* dst = ti->grad.data() + static_cast<std::size_t>(ids[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor tile_rows(const Tensor& v, int m) {
  if (v.rank() != 1) {
    throw std::invalid_argument("tile_rows: operand must be rank-1, got " + shape_str(v.shape()));
  }
  if (m <= 0) throw std::invalid_argument("tile_rows: row count must be positive");
  const int n = v.dim(0);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::size_t>(i) * n);
  }
  if (want_grad(v)) {
    out.set_requires_grad(true);
    auto vi = v.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [vi, oi, m, n] {
      if (!oi->has_grad() || !vi->requires_grad) return;
      vi->ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) vi->grad[j] += oi->grad[i * n + j];
      }
    });
  }
  return out;
}

namespace {

void softmax_inplace(const double* x, double* y, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= z;
}

}  // namespace

Tensor softmax(const Tensor& v) {
  if (v.rank() != 1) {
    throw std::invalid_argument("softmax: operand must be rank-1, got " + shape_str(v.shape()));
  }
  const int n = v.dim(0);
  Tensor out = Tensor::zeros({n});
  softmax_inplace(v.data().data(), out.data().data(), n);
  if (want_grad(v)) {
    out.set_requires_grad(true);
    auto vi = v.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [vi, oi, n] {
      if (!oi->has_grad() || !vi->requires_grad) return;
      vi->ensure_grad();
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += oi->grad[i] * oi->data[i];
      for (int i = 0; i < n; ++i) vi->grad[i] += oi->data[i] * (oi->grad[i] - s);
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("softmax_rows: operand must be rank-2, got " + shape_str(a.shape()));
  }
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    softmax_inplace(a.data().data() + static_cast<std::size_t>(i) * n,
                    out.data().data() + static_cast<std::size_t>(i) * n, n);
  }
  if (want_grad(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [ai, oi, m, n] {
      if (!oi->has_grad() || !ai->requires_grad) return;
      ai->ensure_grad();
      for (int i = 0; i < m; ++i) {
        const double* y = oi->data.data() + static_cast<std::size_t>(i) * n;
        const double* g = oi->grad.data() + static_cast<std::size_t>(i) * n;
        double* dx = ai->grad.data() + static_cast<std::size_t>(i) * n;
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += g[j] * y[j];
        for (int j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - s);
      }
    });
  }
  return out;
}

Tensor sparsemax(const Tensor& v) {
  if (v.rank() != 1) {
    throw std::invalid_argument("sparsemax: operand must be rank-1, got " + shape_str(v.shape()));
  }
  const int n = v.dim(0);
  std::vector<double> z(v.data());
  std::sort(z.begin(), z.end(), std::greater<double>());
  double cumsum = 0.0, tau = 0.0;
  int support = 0;
  for (int k = 1; k <= n; ++k) {
    cumsum += z[static_cast<std::size_t>(k - 1)];
    const double t = (cumsum - 1.0) / k;
    if (z[static_cast<std::size_t>(k - 1)] > t) {
      tau = t;
      support = k;
    }
  }
  (void)support;
  Tensor out = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) out.data()[i] = std::max(v.data()[i] - tau, 0.0);
  if (want_grad(v)) {
    out.set_requires_grad(true);
    auto vi = v.impl(), oi = out.impl();
    // Jacobian on the support S: I - 1*1^T / |S|; zero off support
    Graph::active().record(out.impl(), [vi, oi, n] {
      if (!oi->has_grad() || !vi->requires_grad) return;
      vi->ensure_grad();
      double gsum = 0.0;
      int s = 0;
      for (int i = 0; i < n; ++i) {
        if (oi->data[i] > 0.0) {
          gsum += oi->grad[i];
          ++s;
        }
      }
      if (s == 0) return;
      const double avg = gsum / s;
      for (int i = 0; i < n; ++i) {
        if (oi->data[i] > 0.0) vi->grad[i] += oi->grad[i] - avg;
      }
    });
  }
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy_rows: logits must be rank-2, got " +
                                shape_str(logits.shape()));
  }
  const int m = logits.rows(), n = logits.cols();
  if (static_cast<int>(targets.size()) != m) {
    throw std::invalid_argument("cross_entropy_rows: target count " +
                                std::to_string(targets.size()) + " does not match rows " +
                                std::to_string(m));
  }
  for (int t : targets) {
    if (t < 0 || t >= n) {
      throw std::invalid_argument("cross_entropy_rows: target id " + std::to_string(t) +
                                  " out of range [0, " + std::to_string(n) + ")");
    }
  }
  std::vector<double> probs(static_cast<std::size_t>(m) * n);
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    const double* x = logits.data().data() + static_cast<std::size_t>(i) * n;
    double* p = probs.data() + static_cast<std::size_t>(i) * n;
    softmax_inplace(x, p, n);
    loss -= std::log(std::max(p[targets[static_cast<std::size_t>(i)]], 1e-300));
  }
  Tensor out = Tensor::scalar(loss / m);
  if (want_grad(logits)) {
    out.set_requires_grad(true);
    auto li = logits.impl(), oi = out.impl();
    Graph::active().record(out.impl(), [li, oi, probs = std::move(probs), targets, m, n] {
      if (!oi->has_grad() || !li->requires_grad) return;
      li->ensure_grad();
      const double g = oi->grad[0] / m;
      for (int i = 0; i < m; ++i) {
        const double* p = probs.data() + static_cast<std::size_t>(i) * n;
        double* dx = li->grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) dx[j] += g * p[j];
        dx[targets[static_cast<std::size_t>(i)]] -= g;
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (a.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != a.cols() ||
      bias.dim(0) != a.cols()) {
    throw std::invalid_argument("layer_norm_rows: need [m x n], [n], [n], got " +
                                shape_str(a.shape()) + ", " + shape_str(gain.shape()) + ", " +
                                shape_str(bias.shape()));
  }
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n});
  std::vector<double> xhat(static_cast<std::size_t>(m) * n);
  std::vector<double> inv_std(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* x = a.data().data() + static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const double xh = (x[j] - mu) * is;
      xhat[static_cast<std::size_t>(i) * n + j] = xh;
      out.data()[static_cast<std::size_t>(i) * n + j] = gain.data()[j] * xh + bias.data()[j];
    }
  }
  if (want_grad(a) || want_grad(gain) || want_grad(bias)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
    Graph::active().record(out.impl(),
        [ai, gi, bi, oi, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n] {
          if (!oi->has_grad()) return;
          for (int i = 0; i < m; ++i) {
            const double* g = oi->grad.data() + static_cast<std::size_t>(i) * n;
            const double* xh = xhat.data() + static_cast<std::size_t>(i) * n;
            if (gi->requires_grad) {
              gi->ensure_grad();
              for (int j = 0; j < n; ++j) gi->grad[j] += g[j] * xh[j];
            }
            if (bi->requires_grad) {
              bi->ensure_grad();
              for (int j = 0; j < n; ++j) bi->grad[j] += g[j];
            }
            if (ai->requires_grad) {
              ai->ensure_grad();
              double sum_dxh = 0.0, sum_dxh_xh = 0.0;
              for (int j = 0; j < n; ++j) {
                const double dxh = g[j] * gi->data[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[j];
              }
              const double is = inv_std[static_cast<std::size_t>(i)];
              double* dx = ai->grad.data() + static_cast<std::size_t>(i) * n;
              for (int j = 0; j < n; ++j) {
                const double dxh = g[j] * gi->data[j];
                dx[j] += is * (dxh - sum_dxh / n - xh[j] * sum_dxh_xh / n);
              }
            }
          }
        });
  }
  return out;
}

Tensor as_row(const Tensor& v) {
  if (v.rank() != 1) {
    throw std::invalid_argument("as_row: operand must be rank-1, got " + shape_str(v.shape()));
  }
  return reshape(v, {1, v.dim(0)});
}

Tensor as_vector(const Tensor& a) { return reshape(a, {a.numel()}); }

Tensor row(const Tensor& a, int r) { return as_vector(slice(a, 0, r, 1)); }

Tensor matvec(const Tensor& a, const Tensor& v) {
  if (v.rank() != 1) {
    throw std::invalid_argument("matvec: vector must be rank-1, got " + shape_str(v.shape()));
  }
  return as_vector(matmul(a, reshape(v, {v.dim(0), 1})));
}

Tensor vecmat(const Tensor& v, const Tensor& a) {
  if (v.rank() != 1) {
    throw std::invalid_argument("vecmat: vector must be rank-1, got " + shape_str(v.shape()));
  }
  return as_vector(matmul(reshape(v, {1, v.dim(0)}), a));
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

int argmax(const Tensor& v) {
  int best = 0;
  for (int i = 1; i < v.numel(); ++i) {
    if (v.data()[static_cast<std::size_t>(i)] > v.data()[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace hiergen
