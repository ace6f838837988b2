#include "hiergen/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace hiergen {

double resolve_scale(HattScale kind, int d) {
  return kind == HattScale::sqrt_d ? std::sqrt(static_cast<double>(d)) : static_cast<double>(d);
}

Tensor additive_score(const Tensor& item_state, const Tensor& decoder_state, const Tensor& W,
                      const Tensor& v) {
  if (item_state.rank() != 1 || decoder_state.rank() != 1) {
    throw std::invalid_argument("additive_score: states must be rank-1");
  }
  const int joint = item_state.dim(0) + decoder_state.dim(0);
  if (W.rank() != 2 || W.cols() != joint || v.rank() != 1 || v.dim(0) != W.rows()) {
    throw std::invalid_argument("additive_score: W " + shape_str(W.shape()) + " and v " +
                                shape_str(v.shape()) + " do not fit joint state [" +
                                std::to_string(joint) + "]");
  }
  Tensor joint_state = concat({item_state, decoder_state}, 0);
  return dot(v, tanh(matvec(W, joint_state)));
}

Tensor additive_scores(const Tensor& items, const Tensor& decoder_state, const Tensor& W,
                       const Tensor& v) {
  if (items.rank() != 2 || decoder_state.rank() != 1) {
    throw std::invalid_argument("additive_scores: need [m x d_i] items and rank-1 decoder state");
  }
  const int joint = items.cols() + decoder_state.dim(0);
  if (W.rank() != 2 || W.cols() != joint || v.rank() != 1 || v.dim(0) != W.rows()) {
    throw std::invalid_argument("additive_scores: W " + shape_str(W.shape()) + " and v " +
                                shape_str(v.shape()) + " do not fit joint state [" +
                                std::to_string(joint) + "]");
  }
  Tensor joint_rows = concat({items, tile_rows(decoder_state, items.rows())}, 1);
  return matvec(tanh(matmul(joint_rows, transpose(W))), v);
}

namespace {

Tensor causal_mask(int t) {
  Tensor m = Tensor::zeros({t, t});
  for (int i = 0; i < t; ++i) {
    for (int j = i + 1; j < t; ++j) m.data()[static_cast<std::size_t>(i) * t + j] = kMaskScore;
  }
  return m;
}

}  // namespace

ScaledDotResult scaled_dot_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                                     double scale, bool causal) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2) {
    throw std::invalid_argument("scaled_dot_attention: Q, K, V must be rank-2");
  }
  if (Q.cols() != K.cols() || K.rows() != V.rows()) {
    throw std::invalid_argument("scaled_dot_attention: shape mismatch Q " + shape_str(Q.shape()) +
                                ", K " + shape_str(K.shape()) + ", V " + shape_str(V.shape()));
  }
  if (!(scale > 0.0)) throw std::invalid_argument("scaled_dot_attention: scale must be positive");
  Tensor scores = hiergen::scale(matmul(Q, transpose(K)), 1.0 / scale);
  if (causal) {
    if (Q.rows() != K.rows()) {
      throw std::invalid_argument("scaled_dot_attention: causal mask needs square scores");
    }
    scores = add(scores, causal_mask(Q.rows()));
  }
  Tensor weights = softmax_rows(scores);
  return {matmul(weights, V), weights};
}

ScaledDotResult scaled_dot_attention(const Tensor& Q, const Tensor& K, const Tensor& V) {
  return scaled_dot_attention(Q, K, V, std::sqrt(static_cast<double>(K.cols())), false);
}

void check_head_divisibility(int d_model, int heads) {
  if (heads < 1 || d_model % heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                " is not divisible by head count " + std::to_string(heads));
  }
}

Tensor multi_head(const Tensor& Q, const Tensor& K, const Tensor& V, const MultiHeadParams& p,
                  bool causal) {
  const int h = p.heads();
  if (h == 0 || static_cast<int>(p.wk.size()) != h || static_cast<int>(p.wv.size()) != h) {
    throw std::invalid_argument("multi_head: inconsistent per-head projection lists");
  }
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    const auto& wq = p.wq[static_cast<std::size_t>(i)];
    const auto& wk = p.wk[static_cast<std::size_t>(i)];
    const auto& wv = p.wv[static_cast<std::size_t>(i)];
    const double scale = std::sqrt(static_cast<double>(wk.cols()));
    heads.push_back(
        scaled_dot_attention(matmul(Q, wq), matmul(K, wk), matmul(V, wv), scale, causal).context);
  }
  return matmul(concat(heads, 1), p.wo);
}

void HattInputs::validate() const {
  const int k = sentence_count();
  if (k < 1) throw std::invalid_argument("hatt: needs at least one sentence");
  if (K_s.rank() != 2 || K_s.rows() != k || static_cast<int>(V_w.size()) != k) {
    throw std::invalid_argument("hatt: sentence key/value counts disagree (K_s " +
                                shape_str(K_s.shape()) + ", " + std::to_string(K_w.size()) +
                                " word key blocks, " + std::to_string(V_w.size()) +
                                " word value blocks)");
  }
  if (q_s.rank() != 1 || q_w.rank() != 1 || q_s.dim(0) != K_s.cols()) {
    throw std::invalid_argument("hatt: query dims do not match keys");
  }
  for (int i = 0; i < k; ++i) {
    const auto& kw = K_w[static_cast<std::size_t>(i)];
    const auto& vw = V_w[static_cast<std::size_t>(i)];
    if (kw.rank() != 2 || vw.rank() != 2 || kw.rows() != vw.rows()) {
      throw std::invalid_argument("hatt: word key/value row counts differ in sentence " +
                                  std::to_string(i));
    }
    if (kw.cols() != q_w.dim(0)) {
      throw std::invalid_argument("hatt: word query dim does not match word keys");
    }
  }
}

HattResult hatt(const HattInputs& in, double scale) {
  in.validate();
  if (!(scale > 0.0)) throw std::invalid_argument("hatt: scale must be positive");
  const int k = in.sentence_count();

  Tensor sentence_scores = hiergen::scale(matvec(in.K_s, in.q_s), 1.0 / scale);
  Tensor a = softmax(sentence_scores);

  std::vector<Tensor> word_weights;
  std::vector<Tensor> sentence_contexts;
  word_weights.reserve(static_cast<std::size_t>(k));
  sentence_contexts.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto& kw = in.K_w[static_cast<std::size_t>(i)];
    const auto& vw = in.V_w[static_cast<std::size_t>(i)];
    Tensor b = softmax(hiergen::scale(matvec(kw, in.q_w), 1.0 / scale));
    word_weights.push_back(b);
    sentence_contexts.push_back(as_row(vecmat(b, vw)));
  }
  Tensor per_sentence = concat(sentence_contexts, 0);  // [K x d_v]
  Tensor context = vecmat(a, per_sentence);
  return {context, a, word_weights};
}

MhattResult mhatt(const HattInputs& in, const MhattParams& p, HattScale scale_kind) {
  in.validate();
  const int h = p.heads();
  if (h == 0 || static_cast<int>(p.wqw.size()) != h || static_cast<int>(p.wks.size()) != h ||
      static_cast<int>(p.wkw.size()) != h || static_cast<int>(p.wvw.size()) != h) {
    throw std::invalid_argument("mhatt: inconsistent per-head projection lists");
  }
  const int k = in.sentence_count();

  std::vector<Tensor> head_contexts;
  head_contexts.reserve(static_cast<std::size_t>(h));
  MhattResult result;
  result.sentence_weights.assign(static_cast<std::size_t>(k), 0.0);
  result.word_weights.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    result.word_weights[static_cast<std::size_t>(i)]
        .assign(static_cast<std::size_t>(in.K_w[static_cast<std::size_t>(i)].rows()), 0.0);
  }

  for (int head = 0; head < h; ++head) {
    const std::size_t hi = static_cast<std::size_t>(head);
    HattInputs proj;
    proj.q_s = vecmat(in.q_s, p.wqs[hi]);
    proj.q_w = vecmat(in.q_w, p.wqw[hi]);
    proj.K_s = matmul(in.K_s, p.wks[hi]);
    proj.K_w.reserve(static_cast<std::size_t>(k));
    proj.V_w.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      proj.K_w.push_back(matmul(in.K_w[static_cast<std::size_t>(i)], p.wkw[hi]));
      proj.V_w.push_back(matmul(in.V_w[static_cast<std::size_t>(i)], p.wvw[hi]));
    }
    HattResult hr = hatt(proj, resolve_scale(scale_kind, proj.q_s.dim(0)));
    head_contexts.push_back(hr.context);
    for (int i = 0; i < k; ++i) {
      result.sentence_weights[static_cast<std::size_t>(i)] += hr.sentence_weights.at(i) / h;
      const auto& b = hr.word_weights[static_cast<std::size_t>(i)];
      for (int j = 0; j < b.numel(); ++j) {
        result.word_weights[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            b.at(j) / h;
      }
    }
  }
  result.context = vecmat(concat(head_contexts, 0), p.wo);
  return result;
}

}  // namespace hiergen
