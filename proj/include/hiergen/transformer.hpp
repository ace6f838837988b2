#pragma once

#include <utility>
#include <vector>

#include "hiergen/attention.hpp"
#include "hiergen/tensor.hpp"

namespace hiergen {

// fixed sinusoidal table, [length x d_model], not trainable
Tensor positional_encoding(int length, int d_model);

// x + positional encoding rows
Tensor add_positional_encoding(const Tensor& x);

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2);

struct EncoderBlockParams {
  MultiHeadParams self_attn;
  Tensor w1, b1, w2, b2;  // position-wise feed forward
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;
};

// post-norm: LN(x + SelfAttn(x)) then LN(x + FFN(x)); shape preserved
Tensor encoder_block(const Tensor& x, const EncoderBlockParams& p);

// adds positional encodings, then runs the block stack
Tensor transformer_encode(const Tensor& x, const std::vector<EncoderBlockParams>& blocks);

// embeds token ids (scaled by sqrt(d_model)) and encodes
Tensor encode_sentence_transformer(const std::vector<int>& token_ids, const Tensor& embeddings,
                                   const std::vector<EncoderBlockParams>& blocks);

// [r_BOS ; r_EOS] -> [2 d_model]
Tensor sentence_repr_boseos(const Tensor& word_reps);

// linear 2d->d, positional encoding over sentence index, block stack
Tensor encode_paragraph_transformer(const Tensor& sentence_reprs, const Tensor& proj_w,
                                    const Tensor& proj_b,
                                    const std::vector<EncoderBlockParams>& blocks);

// ---- decoders ---------------------------------------------------------------

struct FlatDecoderBlockParams {
  MultiHeadParams self_attn;   // causal
  MultiHeadParams cross_attn;  // keys/values projected from encoder output
  Tensor w1, b1, w2, b2;
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;
  Tensor ln3_gain, ln3_bias;
};

// standard decoder stack over the whole (causally masked) target prefix;
// returns one row of hidden state per position
Tensor flat_decoder_forward(const Tensor& target_x, const Tensor& encoder_out,
                            const std::vector<FlatDecoderBlockParams>& blocks);

struct HierDecoderBlockParams {
  MultiHeadParams self_attn;  // causal
  MhattParams source_attn;    // hierarchical source attention
  Tensor w1, b1, w2, b2;
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;
  Tensor ln3_gain, ln3_bias;
};

struct HierDecoderParams {
  std::vector<HierDecoderBlockParams> blocks;
  Tensor wq_s, bq_s;  // nonlinear transform of the cached decoder state -> q_s
  Tensor wq_w, bq_w;  // -> q_w
  Tensor h_init;      // decoder state before the first generated word
};

// Decoding state of the stepwise hierarchical decoder: the generated prefix
// and the cached pre-softmax input vector from the previous step.
struct DecoderState {
  std::vector<int> prefix;  // begins with BOS
  Tensor h_prev;
};

struct HierDecoderStepResult {
  Tensor hidden;  // pre-softmax input vector for this step
  MhattResult last_block_attention;
};

// One step: causal self-attention over the embedded prefix, MHATT over the
// hierarchical paragraph representation with queries from h_prev, FFN.
// source.K_s/K_w/V_w hold the projected encoder outputs.
HierDecoderStepResult hier_decoder_step(const Tensor& prefix_x, const Tensor& h_prev,
                                        const HattInputs& source, const HierDecoderParams& p,
                                        HattScale scale_kind);

}  // namespace hiergen
