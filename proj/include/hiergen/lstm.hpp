#pragma once

#include <utility>
#include <vector>

#include "hiergen/attention.hpp"
#include "hiergen/data.hpp"
#include "hiergen/tensor.hpp"

namespace hiergen {

struct LstmState {
  Tensor h;  // [H]
  Tensor c;  // [H]
};

// gate blocks ordered input, forget, candidate, output
struct LstmParams {
  Tensor w_x;  // [in x 4H]
  Tensor w_h;  // [H x 4H]
  Tensor b;    // [4H]

  int input_dim() const { return w_x.rows(); }
  int hidden_dim() const { return w_h.rows(); }
};

LstmState lstm_zero_state(int hidden_dim);

LstmState lstm_cell_step(const Tensor& x, const LstmState& prev, const LstmParams& p);

struct BilstmParams {
  LstmParams fwd;
  LstmParams bwd;
};

// row t = [fwd_h_t ; bwd_h_t], shape [M x 2H]
Tensor bilstm_encode(const Tensor& seq, const BilstmParams& p);

// word encoder input at step t: [word embedding ; BIO tag embedding]
Tensor encode_words(const std::vector<int>& token_ids, const std::vector<Bio>& tags,
                    const Tensor& embeddings, const Tensor& bio_embedding,
                    const BilstmParams& p);

// arithmetic mean over the word rows of one sentence -> [2H]
Tensor sentence_repr_mean(const Tensor& word_reps);

// sentence encoder input at step i: [s_tilde_i ; answer-flag embedding]
Tensor encode_sentences(const Tensor& sentence_reprs, const std::vector<bool>& has_answer,
                        const Tensor& flag_embedding, const BilstmParams& p);

// word reps per sentence, their means, and the contextual sentence states
struct EncodedParagraph {
  std::vector<Tensor> word_reps;    // per sentence [M_i x 2H]
  Tensor sentence_reprs;            // [K x 2H]
  Tensor contextual_sentences;      // [K x 2H']
};

struct HierContextParams {
  Tensor w_word;  // [A x (2H + D_dec)]
  Tensor v_word;  // [A]
  Tensor w_sent;  // [A x (2H' + D_dec)]
  Tensor v_sent;  // [A]
};

struct HierContextResult {
  Tensor context;             // [2H]
  Tensor word_attention;      // [M], softmax over every paragraph word
  Tensor sentence_attention;  // [K], sparsemax
};

// word attention softmaxed over all paragraph words then sliced per sentence
// without renormalizing; per_sentence_word_attention switches to local
// normalization instead
HierContextResult hierarchical_context(const std::vector<Tensor>& word_reps,
                                       const Tensor& sentence_states,
                                       const Tensor& decoder_state, const HierContextParams& p,
                                       bool per_sentence_word_attention = false);

struct LstmDecoderParams {
  LstmParams cell;  // input dim = prev embedding + context
  Tensor w_out;     // [H_dec x |V|]
  Tensor b_out;     // [|V|]
};

// one decoder step on [prev embedding ; context]; returns (logits, new state)
std::pair<Tensor, LstmState> lstm_decoder_step(const Tensor& prev_embedding,
                                               const LstmState& prev, const Tensor& context,
                                               const LstmDecoderParams& p);

}  // namespace hiergen
