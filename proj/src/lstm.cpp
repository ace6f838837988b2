#include "hiergen/lstm.hpp"

#include <stdexcept>

namespace hiergen {

LstmState lstm_zero_state(int hidden_dim) {
  return {Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
}

LstmState lstm_cell_step(const Tensor& x, const LstmState& prev, const LstmParams& p) {
  const int h = p.hidden_dim();
  if (x.rank() != 1 || x.dim(0) != p.input_dim()) {
    throw std::invalid_argument("lstm_cell_step: input " + shape_str(x.shape()) +
                                " does not match w_x " + shape_str(p.w_x.shape()));
  }
  if (prev.h.dim(0) != h || prev.c.dim(0) != h || p.w_x.cols() != 4 * h ||
      p.b.dim(0) != 4 * h) {
    throw std::invalid_argument("lstm_cell_step: state/parameter dims disagree");
  }
  Tensor gates = add(add(vecmat(x, p.w_x), vecmat(prev.h, p.w_h)), p.b);  // [4H]
  Tensor i = sigmoid(slice(gates, 0, 0, h));
  Tensor f = sigmoid(slice(gates, 0, h, h));
  Tensor g = tanh(slice(gates, 0, 2 * h, h));
  Tensor o = sigmoid(slice(gates, 0, 3 * h, h));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor new_h = mul(o, tanh(c));
  return {new_h, c};
}

Tensor bilstm_encode(const Tensor& seq, const BilstmParams& p) {
  if (seq.rank() != 2) {
    throw std::invalid_argument("bilstm_encode: sequence must be rank-2, got " +
                                shape_str(seq.shape()));
  }
  const int m = seq.rows();
  std::vector<Tensor> fwd(static_cast<std::size_t>(m)), bwd(static_cast<std::size_t>(m));
  LstmState state = lstm_zero_state(p.fwd.hidden_dim());
  for (int t = 0; t < m; ++t) {
    state = lstm_cell_step(row(seq, t), state, p.fwd);
    fwd[static_cast<std::size_t>(t)] = state.h;
  }
  state = lstm_zero_state(p.bwd.hidden_dim());
  for (int t = m - 1; t >= 0; --t) {
    state = lstm_cell_step(row(seq, t), state, p.bwd);
    bwd[static_cast<std::size_t>(t)] = state.h;
  }
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t) {
    rows.push_back(as_row(concat({fwd[static_cast<std::size_t>(t)],
                                  bwd[static_cast<std::size_t>(t)]}, 0)));
  }
  return concat(rows, 0);
}

Tensor encode_words(const std::vector<int>& token_ids, const std::vector<Bio>& tags,
                    const Tensor& embeddings, const Tensor& bio_embedding,
                    const BilstmParams& p) {
  if (token_ids.size() != tags.size()) {
    throw std::invalid_argument("encode_words: " + std::to_string(tags.size()) +
                                " tags for " + std::to_string(token_ids.size()) + " tokens");
  }
  if (bio_embedding.rank() != 2 || bio_embedding.rows() != 3) {
    throw std::invalid_argument("encode_words: BIO embedding table must have 3 rows");
  }
  Tensor word_emb = gather_rows(embeddings, token_ids);
  std::vector<int> tag_ids;
  tag_ids.reserve(tags.size());
  for (Bio b : tags) tag_ids.push_back(static_cast<int>(b));
  Tensor tag_emb = gather_rows(bio_embedding, tag_ids);
  return bilstm_encode(concat({word_emb, tag_emb}, 1), p);
}

Tensor sentence_repr_mean(const Tensor& word_reps) {
  if (word_reps.rank() != 2) {
    throw std::invalid_argument("sentence_repr_mean: need [M x d] word reps, got " +
                                shape_str(word_reps.shape()));
  }
  return mean_rows(word_reps);
}

Tensor encode_sentences(const Tensor& sentence_reprs, const std::vector<bool>& has_answer,
                        const Tensor& flag_embedding, const BilstmParams& p) {
  if (sentence_reprs.rank() != 2 ||
      sentence_reprs.rows() != static_cast<int>(has_answer.size())) {
    throw std::invalid_argument("encode_sentences: " + std::to_string(has_answer.size()) +
                                " flags for " + shape_str(sentence_reprs.shape()) +
                                " sentence reprs");
  }
  if (flag_embedding.rank() != 2 || flag_embedding.rows() != 2) {
    throw std::invalid_argument("encode_sentences: flag embedding table must have 2 rows");
  }
  std::vector<int> flag_ids;
  flag_ids.reserve(has_answer.size());
  for (bool f : has_answer) flag_ids.push_back(f ? 1 : 0);
  Tensor flag_emb = gather_rows(flag_embedding, flag_ids);
  return bilstm_encode(concat({sentence_reprs, flag_emb}, 1), p);
}

HierContextResult hierarchical_context(const std::vector<Tensor>& word_reps,
                                       const Tensor& sentence_states,
                                       const Tensor& decoder_state, const HierContextParams& p,
                                       bool per_sentence_word_attention) {
  const int k = static_cast<int>(word_reps.size());
  if (k == 0) throw std::invalid_argument("hierarchical_context: empty paragraph");
  if (sentence_states.rank() != 2 || sentence_states.rows() != k) {
    throw std::invalid_argument("hierarchical_context: " + std::to_string(k) +
                                " sentences but states are " +
                                shape_str(sentence_states.shape()));
  }

  Tensor all_words = concat(word_reps, 0);  // [M x 2H]
  Tensor word_scores = additive_scores(all_words, decoder_state, p.w_word, p.v_word);
  Tensor word_attention;
  if (per_sentence_word_attention) {
    std::vector<Tensor> parts;
    int offset = 0;
    for (int i = 0; i < k; ++i) {
      const int m_i = word_reps[static_cast<std::size_t>(i)].rows();
      parts.push_back(softmax(slice(word_scores, 0, offset, m_i)));
      offset += m_i;
    }
    word_attention = concat(parts, 0);
  } else {
    word_attention = softmax(word_scores);  // over every word in the paragraph
  }

  Tensor sent_scores = additive_scores(sentence_states, decoder_state, p.w_sent, p.v_sent);
  Tensor sentence_attention = sparsemax(sent_scores);

  std::vector<Tensor> per_sentence;
  per_sentence.reserve(static_cast<std::size_t>(k));
  int offset = 0;
  for (int i = 0; i < k; ++i) {
    const auto& reps = word_reps[static_cast<std::size_t>(i)];
    Tensor weights_i = slice(word_attention, 0, offset, reps.rows());  // not renormalized
    per_sentence.push_back(as_row(vecmat(weights_i, reps)));
    offset += reps.rows();
  }
  Tensor context = vecmat(sentence_attention, concat(per_sentence, 0));
  return {context, word_attention, sentence_attention};
}

std::pair<Tensor, LstmState> lstm_decoder_step(const Tensor& prev_embedding,
                                               const LstmState& prev, const Tensor& context,
                                               const LstmDecoderParams& p) {
  Tensor input = concat({prev_embedding, context}, 0);
  LstmState state = lstm_cell_step(input, prev, p.cell);
  Tensor logits = add(vecmat(state.h, p.w_out), p.b_out);
  return {logits, state};
}

}  // namespace hiergen
