#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hiergen/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b, double floor = 1e-8) {
  const double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

// Central finite difference of eval() w.r.t. one coordinate.
inline double numeric_grad(const std::function<double()>& eval, double& coord, double eps = 1e-5) {
  const double orig = coord;
  coord = orig + eps;
  const double fp = eval();
  coord = orig - eps;
  const double fm = eval();
  coord = orig;
  return (fp - fm) / (2.0 * eps);
}

// Checks analytic grads of every leaf against central differences.
// build_loss must construct the graph from the leaves' current data.
inline double max_grad_rel_err(const std::function<hiergen::Tensor()>& build_loss,
                               std::vector<hiergen::Tensor> leaves, double eps = 1e-5) {
  using namespace hiergen;
  Graph::active().clear();
  for (auto& t : leaves) t.zero_grad();
  Tensor loss = build_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : leaves) analytic.push_back(t.grad());
  Graph::active().clear();

  auto eval = [&]() {
    NoGradGuard ng;
    return build_loss().item();
  };
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& data = leaves[li].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double num = numeric_grad(eval, data[i], eps);
      worst = std::max(worst, rel_err(analytic[li][i], num, 1e-6));
    }
  }
  return worst;
}

// Euclidean projection onto the probability simplex via bisection on the
// water-filling threshold. Independent of the sorted-threshold algorithm.
inline std::vector<double> simplex_project_bisect(const std::vector<double>& v) {
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  lo -= 1.0;  // residual(lo) >= 1, residual(hi) == 0
  auto residual = [&](double tau) {
    double s = 0.0;
    for (double x : v) s += std::max(x - tau, 0.0);
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  std::vector<double> p(v.size());
  const double tau = 0.5 * (lo + hi);
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = std::max(v[i] - tau, 0.0);
  return p;
}

// Plain-double reference of the hierarchical selective-attention context:
// additive scores, softmax over all words, sparsemax over sentences (via the
// bisection projection), then the nested weighted sum. No tensor ops.
inline std::vector<double> hier_context_reference(const std::vector<hiergen::Tensor>& word_reps,
                                                  const hiergen::Tensor& sent_states,
                                                  const hiergen::Tensor& dec,
                                                  const hiergen::Tensor& Ww,
                                                  const hiergen::Tensor& vw,
                                                  const hiergen::Tensor& Ws,
                                                  const hiergen::Tensor& vs) {
  auto additive = [&](const hiergen::Tensor& items, const hiergen::Tensor& W,
                      const hiergen::Tensor& v) {
    std::vector<double> scores;
    for (int i = 0; i < items.rows(); ++i) {
      double s = 0.0;
      for (int a = 0; a < W.rows(); ++a) {
        double acc = 0.0;
        for (int c = 0; c < items.cols(); ++c) acc += W.at(a, c) * items.at(i, c);
        for (int c = 0; c < dec.numel(); ++c) acc += W.at(a, items.cols() + c) * dec.at(c);
        s += v.at(a) * std::tanh(acc);
      }
      scores.push_back(s);
    }
    return scores;
  };
  std::vector<double> word_scores;
  for (const auto& reps : word_reps) {
    auto part = additive(reps, Ww, vw);
    word_scores.insert(word_scores.end(), part.begin(), part.end());
  }
  double mx = word_scores[0];
  for (double x : word_scores) mx = std::max(mx, x);
  double z = 0.0;
  std::vector<double> aw(word_scores.size());
  for (std::size_t i = 0; i < word_scores.size(); ++i) {
    aw[i] = std::exp(word_scores[i] - mx);
    z += aw[i];
  }
  for (double& x : aw) x /= z;

  std::vector<double> as = simplex_project_bisect(additive(sent_states, Ws, vs));

  const int dim = word_reps[0].cols();
  std::vector<double> ctx(static_cast<std::size_t>(dim), 0.0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < word_reps.size(); ++i) {
    for (int j = 0; j < word_reps[i].rows(); ++j) {
      for (int d = 0; d < dim; ++d) {
        ctx[static_cast<std::size_t>(d)] += as[i] * aw[offset + static_cast<std::size_t>(j)] *
                                            word_reps[i].at(j, d);
      }
    }
    offset += static_cast<std::size_t>(word_reps[i].rows());
  }
  return ctx;
}

}  // namespace testutil
