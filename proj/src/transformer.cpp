#include "hiergen/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace hiergen {

Tensor positional_encoding(int length, int d_model) {
  if (length < 1 || d_model < 1) {
    throw std::invalid_argument("positional_encoding: length and d_model must be positive");
  }
  Tensor pe = Tensor::zeros({length, d_model});
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, static_cast<double>(i) / d_model);
      pe.data()[static_cast<std::size_t>(pos) * d_model + i] = std::sin(pos / freq);
      if (i + 1 < d_model) {
        pe.data()[static_cast<std::size_t>(pos) * d_model + i + 1] = std::cos(pos / freq);
      }
    }
  }
  return pe;
}

Tensor add_positional_encoding(const Tensor& x) {
  return add(x, positional_encoding(x.rows(), x.cols()));
}

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
  return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
}

Tensor encoder_block(const Tensor& x, const EncoderBlockParams& p) {
  Tensor attended = multi_head(x, x, x, p.self_attn);
  Tensor x1 = layer_norm_rows(add(x, attended), p.ln1_gain, p.ln1_bias);
  Tensor x2 = layer_norm_rows(add(x1, ffn(x1, p.w1, p.b1, p.w2, p.b2)), p.ln2_gain, p.ln2_bias);
  return x2;
}

Tensor transformer_encode(const Tensor& x, const std::vector<EncoderBlockParams>& blocks) {
  Tensor h = add_positional_encoding(x);
  for (const auto& block : blocks) h = encoder_block(h, block);
  return h;
}

Tensor encode_sentence_transformer(const std::vector<int>& token_ids, const Tensor& embeddings,
                                   const std::vector<EncoderBlockParams>& blocks) {
  if (token_ids.empty()) {
    throw std::invalid_argument("encode_sentence_transformer: empty sentence");
  }
  Tensor x = hiergen::scale(gather_rows(embeddings, token_ids),
                            std::sqrt(static_cast<double>(embeddings.cols())));
  return transformer_encode(x, blocks);
}

Tensor sentence_repr_boseos(const Tensor& word_reps) {
  if (word_reps.rank() != 2 || word_reps.rows() < 2) {
    throw std::invalid_argument(
        "sentence_repr_boseos: need at least the BOS and EOS rows, got " +
        shape_str(word_reps.shape()));
  }
  return concat({row(word_reps, 0), row(word_reps, word_reps.rows() - 1)}, 0);
}

Tensor encode_paragraph_transformer(const Tensor& sentence_reprs, const Tensor& proj_w,
                                    const Tensor& proj_b,
                                    const std::vector<EncoderBlockParams>& blocks) {
  if (sentence_reprs.rank() != 2) {
    throw std::invalid_argument("encode_paragraph_transformer: need [K x 2d] sentence reprs");
  }
  Tensor projected = add_bias(matmul(sentence_reprs, proj_w), proj_b);
  return transformer_encode(projected, blocks);
}

Tensor flat_decoder_forward(const Tensor& target_x, const Tensor& encoder_out,
                            const std::vector<FlatDecoderBlockParams>& blocks) {
  Tensor x = add_positional_encoding(target_x);
  for (const auto& p : blocks) {
    Tensor self_attended = multi_head(x, x, x, p.self_attn, /*causal=*/true);
    x = layer_norm_rows(add(x, self_attended), p.ln1_gain, p.ln1_bias);
    Tensor cross = multi_head(x, encoder_out, encoder_out, p.cross_attn);
    x = layer_norm_rows(add(x, cross), p.ln2_gain, p.ln2_bias);
    x = layer_norm_rows(add(x, ffn(x, p.w1, p.b1, p.w2, p.b2)), p.ln3_gain, p.ln3_bias);
  }
  return x;
}

HierDecoderStepResult hier_decoder_step(const Tensor& prefix_x, const Tensor& h_prev,
                                        const HattInputs& source, const HierDecoderParams& p,
                                        HattScale scale_kind) {
  if (prefix_x.rank() != 2) {
    throw std::invalid_argument("hier_decoder_step: prefix must be [t x d]");
  }
  const int t = prefix_x.rows();
  // queries from the previous step's pre-softmax state, shared by all blocks
  Tensor q_s = tanh(add(vecmat(h_prev, p.wq_s), p.bq_s));
  Tensor q_w = tanh(add(vecmat(h_prev, p.wq_w), p.bq_w));
  HattInputs queried = source;
  queried.q_s = q_s;
  queried.q_w = q_w;

  Tensor x = add_positional_encoding(prefix_x);
  MhattResult last_attention;
  for (const auto& block : p.blocks) {
    Tensor self_attended = multi_head(x, x, x, block.self_attn, /*causal=*/true);
    x = layer_norm_rows(add(x, self_attended), block.ln1_gain, block.ln1_bias);
    last_attention = mhatt(queried, block.source_attn, scale_kind);
    x = layer_norm_rows(add(x, tile_rows(last_attention.context, t)), block.ln2_gain,
                        block.ln2_bias);
    x = layer_norm_rows(add(x, ffn(x, block.w1, block.b1, block.w2, block.b2)), block.ln3_gain,
                        block.ln3_bias);
  }
  return {row(x, t - 1), std::move(last_attention)};
}

}  // namespace hiergen
