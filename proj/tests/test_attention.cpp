#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "hiergen/attention.hpp"
#include "hiergen/rng.hpp"
#include "testutil.hpp"

using namespace hiergen;
using testutil::max_grad_rel_err;
using testutil::simplex_project_bisect;

namespace {

// plain-double reference for hatt, no tensor machinery
std::vector<double> hatt_brute_force(const std::vector<double>& qs, const std::vector<double>& qw,
                                     const std::vector<std::vector<double>>& ks,
                                     const std::vector<std::vector<std::vector<double>>>& kw,
                                     const std::vector<std::vector<std::vector<double>>>& vw,
                                     double scale) {
  auto softmax_ref = [](std::vector<double> s) {
    double mx = s[0];
    for (double x : s) mx = std::max(mx, x);
    double z = 0;
    for (double& x : s) {
      x = std::exp(x - mx);
      z += x;
    }
    for (double& x : s) x /= z;
    return s;
  };
  const std::size_t k = ks.size();
  std::vector<double> ssc(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t d = 0; d < qs.size(); ++d) ssc[i] += ks[i][d] * qs[d];
    ssc[i] /= scale;
  }
  std::vector<double> a = softmax_ref(ssc);
  const std::size_t dv = vw[0][0].size();
  std::vector<double> ctx(dv, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> wsc(kw[i].size(), 0.0);
    for (std::size_t j = 0; j < kw[i].size(); ++j) {
      for (std::size_t d = 0; d < qw.size(); ++d) wsc[j] += kw[i][j][d] * qw[d];
      wsc[j] /= scale;
    }
    std::vector<double> b = softmax_ref(wsc);
    for (std::size_t j = 0; j < kw[i].size(); ++j) {
      for (std::size_t d = 0; d < dv; ++d) ctx[d] += a[i] * b[j] * vw[i][j][d];
    }
  }
  return ctx;
}

HattInputs random_hatt_inputs(Rng& rng, int k, const std::vector<int>& sentence_lens, int d,
                              int dv, bool requires_grad = false) {
  HattInputs in;
  in.q_s = Tensor::uniform({d}, -1, 1, rng, requires_grad);
  in.q_w = Tensor::uniform({d}, -1, 1, rng, requires_grad);
  in.K_s = Tensor::uniform({k, d}, -1, 1, rng, requires_grad);
  for (int i = 0; i < k; ++i) {
    in.K_w.push_back(Tensor::uniform({sentence_lens[static_cast<std::size_t>(i)], d}, -1, 1, rng,
                                     requires_grad));
    in.V_w.push_back(Tensor::uniform({sentence_lens[static_cast<std::size_t>(i)], dv}, -1, 1, rng,
                                     requires_grad));
  }
  return in;
}

Tensor identity(int n) {
  Tensor t = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) t.data()[static_cast<std::size_t>(i) * n + i] = 1.0;
  return t;
}

}  // namespace

TEST_CASE("softmax basics") {
  Tensor w = softmax(Tensor::from({2}, {0, 0}));
  CHECK(w.at(0) == doctest::Approx(0.5));
  CHECK(w.at(1) == doctest::Approx(0.5));

  Tensor big = softmax(Tensor::from({2}, {1000, 0}));
  CHECK(big.all_finite());
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) == doctest::Approx(0.0));

  // high-precision cross-check with long double arithmetic
  std::vector<double> v{0.2, 1.1, -0.4};
  long double z = 0;
  for (double x : v) z += expl(static_cast<long double>(x));
  Tensor s = softmax(Tensor::from({3}, v));
  for (int i = 0; i < 3; ++i) {
    const double expected = static_cast<double>(expl(static_cast<long double>(v[static_cast<std::size_t>(i)])) / z);
    CHECK(s.at(i) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("sparsemax examples vs projection oracle") {
  Tensor even = sparsemax(Tensor::from({2}, {0, 0}));
  CHECK(even.at(0) == doctest::Approx(0.5));
  CHECK(even.at(1) == doctest::Approx(0.5));

  Tensor hard = sparsemax(Tensor::from({2}, {2, 0}));
  CHECK(hard.at(0) == 1.0);
  CHECK(hard.at(1) == 0.0);

  Tensor soft = sparsemax(Tensor::from({3}, {0.5, 0.3, 0.1}));
  CHECK(soft.at(0) == doctest::Approx(0.5 + 0.1 / 3).epsilon(1e-12));
  CHECK(soft.at(1) == doctest::Approx(0.3 + 0.1 / 3).epsilon(1e-12));
  CHECK(soft.at(2) == doctest::Approx(0.1 + 0.1 / 3).epsilon(1e-12));

  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.randint(12));
    Tensor v = Tensor::uniform({n}, -3, 3, rng);
    Tensor p = sparsemax(v);
    auto oracle = simplex_project_bisect(v.data());
    for (int i = 0; i < n; ++i) CHECK(std::fabs(p.at(i) - oracle[static_cast<std::size_t>(i)]) < 1e-9);
  }
}

TEST_CASE("softmax and sparsemax distribution properties") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.randint(50));
    Tensor v = Tensor::uniform({n}, -5, 5, rng);
    for (Tensor w : {softmax(v), sparsemax(v)}) {
      double s = 0;
      for (int i = 0; i < n; ++i) {
        CHECK(w.at(i) >= 0.0);
        s += w.at(i);
      }
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
    CHECK(argmax(softmax(v)) == argmax(v));
    Tensor sp = sparsemax(v);
    CHECK(sp.at(argmax(v)) > 0.0);  // argmax always in sparsemax support
  }
}

TEST_CASE("sparsemax shift invariance and support shrinkage") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.randint(10));
    Tensor v = Tensor::uniform({n}, -2, 2, rng);
    const double c = std::floor(rng.uniform(-4, 4));
    Tensor shifted = Tensor::zeros({n});
    for (int i = 0; i < n; ++i) shifted.data()[static_cast<std::size_t>(i)] = v.at(i) + c;
    Tensor p0 = sparsemax(v), p1 = sparsemax(shifted);
    for (int i = 0; i < n; ++i) {
      CHECK(std::fabs(p0.at(i) - p1.at(i)) < 1e-12);
      CHECK((p0.at(i) > 0) == (p1.at(i) > 0));
    }

    auto support_size = [](const Tensor& p) {
      int s = 0;
      for (int i = 0; i < p.numel(); ++i) s += p.at(i) > 0 ? 1 : 0;
      return s;
    };
    const double t = 1.0 + rng.uniform(0, 4);
    Tensor scaled_in = Tensor::zeros({n});
    for (int i = 0; i < n; ++i) scaled_in.data()[static_cast<std::size_t>(i)] = v.at(i) * t;
    CHECK(support_size(sparsemax(scaled_in)) <= support_size(p0));
  }
}

TEST_CASE("sparsemax gradient matches finite differences on the support") {
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 100; ++trial) {
    Tensor v = Tensor::uniform({6}, -1, 1, rng, true);
    Tensor weight = Tensor::uniform({6}, -1, 1, rng);
    // skip inputs whose support changes within the FD stencil
    auto support_of = [&](double eps_shift, int coord) {
      std::vector<double> data = v.data();
      data[static_cast<std::size_t>(coord)] += eps_shift;
      auto p = simplex_project_bisect(data);
      std::set<int> s;
      for (int i = 0; i < 6; ++i) {
        if (p[static_cast<std::size_t>(i)] > 1e-7) s.insert(i);
      }
      return s;
    };
    bool stable = true;
    for (int i = 0; i < 6 && stable; ++i) {
      stable = support_of(2e-5, i) == support_of(-2e-5, i);
    }
    if (!stable) continue;
    ++checked;
    double err = max_grad_rel_err([&] { return sum(mul(sparsemax(v), weight)); }, {v});
    CHECK(err < 1e-4);
  }
  CHECK(checked >= 100);
}

TEST_CASE("additive score") {
  Rng rng(17);
  Tensor item = Tensor::uniform({3}, -1, 1, rng);
  Tensor dec = Tensor::uniform({2}, -1, 1, rng);

  Tensor w0 = Tensor::zeros({4, 5});
  Tensor v0 = Tensor::zeros({4});
  CHECK(additive_score(item, dec, w0, Tensor::uniform({4}, -1, 1, rng)).item() == 0.0);
  CHECK(additive_score(item, dec, Tensor::uniform({4, 5}, -1, 1, rng), v0).item() == 0.0);

  Tensor W = Tensor::uniform({4, 5}, -1, 1, rng);
  Tensor v = Tensor::uniform({4}, -1, 1, rng);
  double expected = 0.0;
  for (int r = 0; r < 4; ++r) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) acc += W.at(r, c) * item.at(c);
    for (int c = 0; c < 2; ++c) acc += W.at(r, 3 + c) * dec.at(c);
    expected += v.at(r) * std::tanh(acc);
  }
  CHECK(additive_score(item, dec, W, v).item() == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(additive_score(item, dec, Tensor::zeros({4, 6}), v), std::invalid_argument);

  // the batched path agrees with the single-item path
  Tensor items = Tensor::uniform({5, 3}, -1, 1, rng);
  Tensor scores = additive_scores(items, dec, W, v);
  for (int i = 0; i < 5; ++i) {
    CHECK(scores.at(i) ==
          doctest::Approx(additive_score(row(items, i), dec, W, v).item()).epsilon(1e-12));
  }
}

TEST_CASE("scaled dot attention") {
  Rng rng(23);
  Tensor q = Tensor::uniform({1, 3}, -1, 1, rng);
  Tensor k1 = Tensor::uniform({1, 3}, -1, 1, rng);
  Tensor v1 = Tensor::uniform({1, 4}, -1, 1, rng);
  auto res = scaled_dot_attention(q, k1, v1);
  for (int i = 0; i < 4; ++i) CHECK(res.context.at(0, i) == doctest::Approx(v1.at(0, i)));
  CHECK(res.weights.at(0, 0) == doctest::Approx(1.0));

  // one-hot keys, huge query aligned with key 1 -> context ~ V row 1
  Tensor keys = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor vals = Tensor::uniform({3, 2}, -1, 1, rng);
  Tensor query = Tensor::from({1, 3}, {0, 500, 0});
  auto picked = scaled_dot_attention(query, keys, vals);
  CHECK(picked.context.at(0, 0) == doctest::Approx(vals.at(1, 0)).epsilon(1e-9));
  CHECK(picked.context.at(0, 1) == doctest::Approx(vals.at(1, 1)).epsilon(1e-9));

  // random 2x3 vs brute force
  Tensor Q = Tensor::uniform({2, 3}, -1, 1, rng);
  Tensor K = Tensor::uniform({5, 3}, -1, 1, rng);
  Tensor V = Tensor::uniform({5, 4}, -1, 1, rng);
  const double scale = std::sqrt(3.0);
  auto got = scaled_dot_attention(Q, K, V, scale);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> s(5);
    for (int j = 0; j < 5; ++j) {
      double acc = 0;
      for (int d = 0; d < 3; ++d) acc += Q.at(i, d) * K.at(j, d);
      s[static_cast<std::size_t>(j)] = acc / scale;
    }
    double mx = *std::max_element(s.begin(), s.end()), z = 0;
    for (double& x : s) {
      x = std::exp(x - mx);
      z += x;
    }
    for (int d = 0; d < 4; ++d) {
      double ctx = 0;
      for (int j = 0; j < 5; ++j) ctx += s[static_cast<std::size_t>(j)] / z * V.at(j, d);
      CHECK(std::fabs(got.context.at(i, d) - ctx) <= 1e-9);
    }
  }

  CHECK_THROWS_AS(scaled_dot_attention(Q, K, V, 0.0), std::invalid_argument);
}

TEST_CASE("masked positions get zero weight") {
  Tensor scores = Tensor::from({3}, {0.4, kMaskScore, 1.2});
  Tensor w = softmax(scores);
  CHECK(w.at(1) == 0.0);
  CHECK(w.at(0) + w.at(2) == doctest::Approx(1.0));
  Tensor sp = sparsemax(scores);
  CHECK(sp.at(1) == 0.0);
}

TEST_CASE("multi head attention") {
  Rng rng(29);
  CHECK_THROWS_AS(check_head_divisibility(6, 4), std::invalid_argument);
  check_head_divisibility(8, 4);

  // h=1 with identity projections reduces to scaled dot attention
  const int d = 4;
  MultiHeadParams p1;
  p1.wq = {identity(d)};
  p1.wk = {identity(d)};
  p1.wv = {identity(d)};
  p1.wo = identity(d);
  Tensor Q = Tensor::uniform({3, d}, -1, 1, rng);
  Tensor K = Tensor::uniform({4, d}, -1, 1, rng);
  Tensor V = Tensor::uniform({4, d}, -1, 1, rng);
  Tensor mh = multi_head(Q, K, V, p1);
  Tensor sd = scaled_dot_attention(Q, K, V).context;
  for (int i = 0; i < mh.numel(); ++i) CHECK(mh.data()[static_cast<std::size_t>(i)] ==
                                             doctest::Approx(sd.data()[static_cast<std::size_t>(i)]).epsilon(1e-12));

  // h=2, d_model=4 vs per-head brute force
  MultiHeadParams p2;
  for (int h = 0; h < 2; ++h) {
    p2.wq.push_back(Tensor::uniform({4, 2}, -1, 1, rng));
    p2.wk.push_back(Tensor::uniform({4, 2}, -1, 1, rng));
    p2.wv.push_back(Tensor::uniform({4, 2}, -1, 1, rng));
  }
  p2.wo = Tensor::uniform({4, 4}, -1, 1, rng);
  Tensor out = multi_head(Q, K, V, p2);
  CHECK(out.shape() == Shape{3, 4});
  std::vector<Tensor> href;
  for (int h = 0; h < 2; ++h) {
    href.push_back(scaled_dot_attention(matmul(Q, p2.wq[static_cast<std::size_t>(h)]),
                                        matmul(K, p2.wk[static_cast<std::size_t>(h)]),
                                        matmul(V, p2.wv[static_cast<std::size_t>(h)]),
                                        std::sqrt(2.0))
                       .context);
  }
  Tensor ref = matmul(concat(href, 1), p2.wo);
  for (int i = 0; i < out.numel(); ++i) {
    CHECK(std::fabs(out.data()[static_cast<std::size_t>(i)] - ref.data()[static_cast<std::size_t>(i)]) <= 1e-9);
  }
}

TEST_CASE("hatt reductions and brute force") {
  Rng rng(41);

  // one sentence: a = [1], reduces to word attention over that sentence
  HattInputs one = random_hatt_inputs(rng, 1, {4}, 3, 5);
  auto res = hatt(one, std::sqrt(3.0));
  CHECK(res.sentence_weights.numel() == 1);
  CHECK(res.sentence_weights.at(0) == doctest::Approx(1.0));
  Tensor direct = vecmat(res.word_weights[0], one.V_w[0]);
  for (int i = 0; i < 5; ++i) CHECK(res.context.at(i) == doctest::Approx(direct.at(i)).epsilon(1e-12));

  // one sentence, one word: context equals that word's value row
  HattInputs tiny = random_hatt_inputs(rng, 1, {1}, 3, 5);
  auto tres = hatt(tiny, std::sqrt(3.0));
  for (int i = 0; i < 5; ++i) CHECK(tres.context.at(i) == doctest::Approx(tiny.V_w[0].at(0, i)));

  // K=2, M=(2,3) vs triple-loop brute force
  for (int trial = 0; trial < 100; ++trial) {
    HattInputs in = random_hatt_inputs(rng, 2, {2, 3}, 4, 3);
    auto got = hatt(in, std::sqrt(4.0));
    std::vector<std::vector<double>> ks{{in.K_s.at(0, 0), in.K_s.at(0, 1), in.K_s.at(0, 2), in.K_s.at(0, 3)},
                                        {in.K_s.at(1, 0), in.K_s.at(1, 1), in.K_s.at(1, 2), in.K_s.at(1, 3)}};
    std::vector<std::vector<std::vector<double>>> kw(2), vw(2);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < in.K_w[static_cast<std::size_t>(i)].rows(); ++j) {
        std::vector<double> krow(4), vrow(3);
        for (int c = 0; c < 4; ++c) krow[static_cast<std::size_t>(c)] = in.K_w[static_cast<std::size_t>(i)].at(j, c);
        for (int c = 0; c < 3; ++c) vrow[static_cast<std::size_t>(c)] = in.V_w[static_cast<std::size_t>(i)].at(j, c);
        kw[static_cast<std::size_t>(i)].push_back(krow);
        vw[static_cast<std::size_t>(i)].push_back(vrow);
      }
    }
    auto ref = hatt_brute_force(in.q_s.data(), in.q_w.data(), ks, kw, vw, std::sqrt(4.0));
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(got.context.at(i) - ref[static_cast<std::size_t>(i)]) <= 1e-9);
  }

  HattInputs bad;
  CHECK_THROWS_AS(hatt(bad, 1.0), std::invalid_argument);
}

TEST_CASE("hatt is differentiable") {
  Rng rng(43);
  HattInputs in = random_hatt_inputs(rng, 2, {2, 3}, 3, 4, true);
  Tensor w = Tensor::uniform({4}, -1, 1, rng);
  double err = max_grad_rel_err(
      [&] { return dot(hatt(in, std::sqrt(3.0)).context, w); },
      {in.q_s, in.q_w, in.K_s, in.K_w[0], in.K_w[1], in.V_w[0], in.V_w[1]});
  CHECK(err < 1e-4);
}

TEST_CASE("mhatt h=1 identity reduces to hatt, shape and brute force") {
  Rng rng(47);
  const int d = 4, dv = 4;
  HattInputs in = random_hatt_inputs(rng, 3, {2, 4, 3}, d, dv);

  MhattParams p1;
  p1.wqs = {identity(d)};
  p1.wqw = {identity(d)};
  p1.wks = {identity(d)};
  p1.wkw = {identity(d)};
  p1.wvw = {identity(dv)};
  p1.wo = identity(dv);
  auto got = mhatt(in, p1, HattScale::sqrt_d);
  auto ref = hatt(in, std::sqrt(static_cast<double>(d)));
  for (int i = 0; i < dv; ++i) {
    CHECK(std::fabs(got.context.at(i) - ref.context.at(i)) <= 1e-12);
  }

  MhattParams p2;
  const int dk = 2;
  for (int h = 0; h < 2; ++h) {
    p2.wqs.push_back(Tensor::uniform({d, dk}, -1, 1, rng));
    p2.wqw.push_back(Tensor::uniform({d, dk}, -1, 1, rng));
    p2.wks.push_back(Tensor::uniform({d, dk}, -1, 1, rng));
    p2.wkw.push_back(Tensor::uniform({d, dk}, -1, 1, rng));
    p2.wvw.push_back(Tensor::uniform({dv, dk}, -1, 1, rng));
  }
  p2.wo = Tensor::uniform({2 * dk, d}, -1, 1, rng);
  auto out = mhatt(in, p2, HattScale::sqrt_d);
  CHECK(out.context.shape() == Shape{d});

  // brute force each head with projected inputs
  std::vector<Tensor> heads;
  for (int h = 0; h < 2; ++h) {
    HattInputs proj;
    proj.q_s = vecmat(in.q_s, p2.wqs[static_cast<std::size_t>(h)]);
    proj.q_w = vecmat(in.q_w, p2.wqw[static_cast<std::size_t>(h)]);
    proj.K_s = matmul(in.K_s, p2.wks[static_cast<std::size_t>(h)]);
    for (int i = 0; i < 3; ++i) {
      proj.K_w.push_back(matmul(in.K_w[static_cast<std::size_t>(i)], p2.wkw[static_cast<std::size_t>(h)]));
      proj.V_w.push_back(matmul(in.V_w[static_cast<std::size_t>(i)], p2.wvw[static_cast<std::size_t>(h)]));
    }
    heads.push_back(hatt(proj, std::sqrt(static_cast<double>(dk))).context);
  }
  Tensor expect = vecmat(concat(heads, 0), p2.wo);
  for (int i = 0; i < d; ++i) CHECK(std::fabs(out.context.at(i) - expect.at(i)) <= 1e-9);
}

TEST_CASE("hatt scale literal-d option") {
  CHECK(resolve_scale(HattScale::sqrt_d, 16) == doctest::Approx(4.0));
  CHECK(resolve_scale(HattScale::d, 16) == doctest::Approx(16.0));
}
