#pragma once

#include <vector>

#include "hiergen/tensor.hpp"

namespace hiergen {

enum class AttentionLevel { word, sentence };

// One attention distribution, extracted for inspection/reporting.
struct AttentionWeights {
  std::vector<double> weights;
  AttentionLevel level = AttentionLevel::word;
};

// Scaling of the hierarchical attention scores: sqrt_d follows scaled
// dot-product attention, d divides by the raw query dimension.
enum class HattScale { sqrt_d, d };

double resolve_scale(HattScale kind, int d);

// Score added before softmax/sparsemax at masked positions. Finite so
// downstream values stay finite.
inline constexpr double kMaskScore = -1e30;

// v^T tanh(W [item; decoder])
Tensor additive_score(const Tensor& item_state, const Tensor& decoder_state, const Tensor& W,
                      const Tensor& v);
// All rows of items scored against one decoder state -> [m]
Tensor additive_scores(const Tensor& items, const Tensor& decoder_state, const Tensor& W,
                       const Tensor& v);

struct ScaledDotResult {
  Tensor context;  // [q x d_v]
  Tensor weights;  // [q x n]
};

// softmax(Q K^T / scale) V. Pass causal=true to mask positions j > i.
ScaledDotResult scaled_dot_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                                     double scale, bool causal = false);
// scale defaults to sqrt(d_k)
ScaledDotResult scaled_dot_attention(const Tensor& Q, const Tensor& K, const Tensor& V);

struct MultiHeadParams {
  std::vector<Tensor> wq;  // per head [d_model x d_k]
  std::vector<Tensor> wk;  // per head [d_model x d_k]
  std::vector<Tensor> wv;  // per head [d_model x d_v]
  Tensor wo;               // [h*d_v x d_model]

  int heads() const { return static_cast<int>(wq.size()); }
};

// throws on d_model not divisible by heads
void check_head_divisibility(int d_model, int heads);

Tensor multi_head(const Tensor& Q, const Tensor& K, const Tensor& V, const MultiHeadParams& p,
                  bool causal = false);

// Inputs of the hierarchical attention module: a sentence-level query over
// sentence keys plus per-sentence word keys/values for a word-level query.
struct HattInputs {
  Tensor q_s;               // [d]
  Tensor q_w;               // [d]
  Tensor K_s;               // [K x d]
  std::vector<Tensor> K_w;  // per sentence [M_i x d]
  std::vector<Tensor> V_w;  // per sentence [M_i x d_v]

  int sentence_count() const { return static_cast<int>(K_w.size()); }
  void validate() const;
};

struct HattResult {
  Tensor context;                    // [d_v]
  Tensor sentence_weights;           // [K]
  std::vector<Tensor> word_weights;  // per sentence [M_i]
};

// a = softmax(q_s K_s^T / scale); b_i = softmax(q_w K_w_i^T / scale);
// context = sum_i a_i (b_i . V_w_i)
HattResult hatt(const HattInputs& in, double scale);

struct MhattParams {
  std::vector<Tensor> wqs;  // per head [d x d_k]
  std::vector<Tensor> wqw;  // per head [d x d_k]
  std::vector<Tensor> wks;  // per head [d x d_k]
  std::vector<Tensor> wkw;  // per head [d x d_k]
  std::vector<Tensor> wvw;  // per head [d_v_in x d_v]
  Tensor wo;                // [h*d_v x d_out]

  int heads() const { return static_cast<int>(wqs.size()); }
};

struct MhattResult {
  Tensor context;  // [d_out]
  // head-averaged weights, for inspection
  std::vector<double> sentence_weights;
  std::vector<std::vector<double>> word_weights;
};

MhattResult mhatt(const HattInputs& in, const MhattParams& p, HattScale scale_kind);

}  // namespace hiergen
