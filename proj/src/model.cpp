#include "hiergen/model.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "hiergen/attention.hpp"
#include "hiergen/lstm.hpp"
#include "hiergen/transformer.hpp"

namespace hiergen {

// ---- parameter registry -----------------------------------------------------

Tensor ModelParams::add(const std::string& name, Tensor t) {
  if (index_.count(name) > 0) {
    throw std::invalid_argument("parameter '" + name + "' registered twice");
  }
  t.set_requires_grad(true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ModelParams::create_xavier(const std::string& name, Shape shape, Rng& rng) {
  double fan_in = 1, fan_out = 1;
  if (shape.size() == 2) {
    fan_in = shape[0];
    fan_out = shape[1];
  } else {
    fan_in = fan_out = shape[0];
  }
  const double r = std::sqrt(6.0 / (fan_in + fan_out));
  return add(name, Tensor::uniform(shape, -r, r, rng));
}

Tensor ModelParams::create_uniform(const std::string& name, Shape shape, double lo, double hi,
                                   Rng& rng) {
  return add(name, Tensor::uniform(shape, lo, hi, rng));
}

Tensor ModelParams::create_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(shape));
}

Tensor ModelParams::create_ones(const std::string& name, Shape shape) {
  return add(name, Tensor::full(shape, 1.0));
}

Tensor& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("no parameter named '" + name + "'");
  return items_[it->second].second;
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("no parameter named '" + name + "'");
  return items_[it->second].second;
}

long long ModelParams::total_parameters() const {
  long long n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

// ---- shared builders ----------------------------------------------------------

namespace {

LstmParams make_lstm(ModelParams& P, const std::string& prefix, int in, int hidden, Rng& rng) {
  LstmParams p;
  p.w_x = P.create_xavier(prefix + ".w_x", {in, 4 * hidden}, rng);
  p.w_h = P.create_xavier(prefix + ".w_h", {hidden, 4 * hidden}, rng);
  p.b = P.create_zeros(prefix + ".b", {4 * hidden});
  return p;
}

BilstmParams make_bilstm(ModelParams& P, const std::string& prefix, int in, int hidden,
                         Rng& rng) {
  return {make_lstm(P, prefix + ".fwd", in, hidden, rng),
          make_lstm(P, prefix + ".bwd", in, hidden, rng)};
}

MultiHeadParams make_heads(ModelParams& P, const std::string& prefix, int d_model, int heads,
                           Rng& rng) {
  check_head_divisibility(d_model, heads);
  const int dk = d_model / heads;
  MultiHeadParams p;
  for (int i = 0; i < heads; ++i) {
    const std::string h = prefix + ".h" + std::to_string(i);
    p.wq.push_back(P.create_xavier(h + ".wq", {d_model, dk}, rng));
    p.wk.push_back(P.create_xavier(h + ".wk", {d_model, dk}, rng));
    p.wv.push_back(P.create_xavier(h + ".wv", {d_model, dk}, rng));
  }
  p.wo = P.create_xavier(prefix + ".wo", {d_model, d_model}, rng);
  return p;
}

MhattParams make_mhatt(ModelParams& P, const std::string& prefix, int d_model, int heads,
                       Rng& rng) {
  check_head_divisibility(d_model, heads);
  const int dk = d_model / heads;
  MhattParams p;
  for (int i = 0; i < heads; ++i) {
    const std::string h = prefix + ".h" + std::to_string(i);
    p.wqs.push_back(P.create_xavier(h + ".wqs", {d_model, dk}, rng));
    p.wqw.push_back(P.create_xavier(h + ".wqw", {d_model, dk}, rng));
    p.wks.push_back(P.create_xavier(h + ".wks", {d_model, dk}, rng));
    p.wkw.push_back(P.create_xavier(h + ".wkw", {d_model, dk}, rng));
    p.wvw.push_back(P.create_xavier(h + ".wvw", {d_model, dk}, rng));
  }
  p.wo = P.create_xavier(prefix + ".wo", {d_model, d_model}, rng);
  return p;
}

void make_ffn_and_norms(ModelParams& P, const std::string& prefix, int d_model, int ffn_dim,
                        Rng& rng, Tensor& w1, Tensor& b1, Tensor& w2, Tensor& b2) {
  w1 = P.create_xavier(prefix + ".ffn.w1", {d_model, ffn_dim}, rng);
  b1 = P.create_zeros(prefix + ".ffn.b1", {ffn_dim});
  w2 = P.create_xavier(prefix + ".ffn.w2", {ffn_dim, d_model}, rng);
  b2 = P.create_zeros(prefix + ".ffn.b2", {d_model});
}

EncoderBlockParams make_encoder_block(ModelParams& P, const std::string& prefix, int d_model,
                                      int heads, int ffn_dim, Rng& rng) {
  EncoderBlockParams p;
  p.self_attn = make_heads(P, prefix + ".self", d_model, heads, rng);
  make_ffn_and_norms(P, prefix, d_model, ffn_dim, rng, p.w1, p.b1, p.w2, p.b2);
  p.ln1_gain = P.create_ones(prefix + ".ln1.gain", {d_model});
  p.ln1_bias = P.create_zeros(prefix + ".ln1.bias", {d_model});
  p.ln2_gain = P.create_ones(prefix + ".ln2.gain", {d_model});
  p.ln2_bias = P.create_zeros(prefix + ".ln2.bias", {d_model});
  return p;
}

FlatDecoderBlockParams make_flat_decoder_block(ModelParams& P, const std::string& prefix,
                                               int d_model, int heads, int ffn_dim, Rng& rng) {
  FlatDecoderBlockParams p;
  p.self_attn = make_heads(P, prefix + ".self", d_model, heads, rng);
  p.cross_attn = make_heads(P, prefix + ".cross", d_model, heads, rng);
  make_ffn_and_norms(P, prefix, d_model, ffn_dim, rng, p.w1, p.b1, p.w2, p.b2);
  p.ln1_gain = P.create_ones(prefix + ".ln1.gain", {d_model});
  p.ln1_bias = P.create_zeros(prefix + ".ln1.bias", {d_model});
  p.ln2_gain = P.create_ones(prefix + ".ln2.gain", {d_model});
  p.ln2_bias = P.create_zeros(prefix + ".ln2.bias", {d_model});
  p.ln3_gain = P.create_ones(prefix + ".ln3.gain", {d_model});
  p.ln3_bias = P.create_zeros(prefix + ".ln3.bias", {d_model});
  return p;
}

HierDecoderBlockParams make_hier_decoder_block(ModelParams& P, const std::string& prefix,
                                               int d_model, int heads, int ffn_dim, Rng& rng) {
  HierDecoderBlockParams p;
  p.self_attn = make_heads(P, prefix + ".self", d_model, heads, rng);
  p.source_attn = make_mhatt(P, prefix + ".src", d_model, heads, rng);
  make_ffn_and_norms(P, prefix, d_model, ffn_dim, rng, p.w1, p.b1, p.w2, p.b2);
  p.ln1_gain = P.create_ones(prefix + ".ln1.gain", {d_model});
  p.ln1_bias = P.create_zeros(prefix + ".ln1.bias", {d_model});
  p.ln2_gain = P.create_ones(prefix + ".ln2.gain", {d_model});
  p.ln2_bias = P.create_zeros(prefix + ".ln2.bias", {d_model});
  p.ln3_gain = P.create_ones(prefix + ".ln3.gain", {d_model});
  p.ln3_bias = P.create_zeros(prefix + ".ln3.bias", {d_model});
  return p;
}

void flatten_instance(const QGInstance& inst, std::vector<int>& ids, std::vector<Bio>& tags) {
  ids.clear();
  tags.clear();
  for (std::size_t i = 0; i < inst.paragraph.size(); ++i) {
    ids.insert(ids.end(), inst.paragraph[i].begin(), inst.paragraph[i].end());
    tags.insert(tags.end(), inst.bio_tags[i].begin(), inst.bio_tags[i].end());
  }
}

std::atomic<bool> g_truncation_warned{false};

// decoder inputs [BOS, y...] and targets [y..., EOS], clamped to max length
void teacher_pair(const QGInstance& inst, int max_len, std::vector<int>& inputs,
                  std::vector<int>& targets) {
  std::vector<int> question = inst.question;
  if (static_cast<int>(question.size()) > max_len) {
    question.resize(static_cast<std::size_t>(max_len));
    if (!g_truncation_warned.exchange(true)) {
      std::cerr << "warning: question of instance " << inst.id << " truncated to " << max_len
                << " tokens\n";
    }
  }
  inputs.assign(1, Vocab::kBos);
  inputs.insert(inputs.end(), question.begin(), question.end());
  targets = question;
  targets.push_back(Vocab::kEos);
}

std::vector<double> logprobs_from_logits(const Tensor& logits) {
  const auto& x = logits.data();
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

// token-count weighted mean of per-instance mean losses
Tensor combine_batch_losses(const std::vector<std::pair<Tensor, int>>& losses) {
  int total = 0;
  for (const auto& [loss, count] : losses) total += count;
  Tensor acc = hiergen::scale(losses[0].first, static_cast<double>(losses[0].second));
  for (std::size_t i = 1; i < losses.size(); ++i) {
    acc = add(acc, hiergen::scale(losses[i].first, static_cast<double>(losses[i].second)));
  }
  return hiergen::scale(acc, 1.0 / total);
}

void check_batch(const std::vector<QGInstance>& batch) {
  if (batch.empty()) throw std::invalid_argument("forward_loss: empty batch");
}

// ---- LSTM architectures --------------------------------------------------------

class LstmModelBase : public Model {
 protected:
  LstmModelBase(Config config, Rng& rng, int init_in_dim)
      : Model(std::move(config)),
        embed_(params_.create_uniform("embed.word", {config_.vocab_size, config_.embed_dim},
                                      -0.1, 0.1, rng)),
        bio_embed_(params_.create_uniform("embed.bio", {3, config_.bio_dim}, -0.1, 0.1, rng)),
        wenc_(make_bilstm(params_, "wenc", config_.embed_dim + config_.bio_dim, config_.hidden,
                          rng)) {
    const int ctx_dim = 2 * config_.hidden;
    dec_.cell = make_lstm(params_, "dec.cell", config_.embed_dim + ctx_dim, config_.dec_hidden,
                          rng);
    dec_.w_out = params_.create_xavier("dec.out.w", {config_.dec_hidden, config_.vocab_size}, rng);
    dec_.b_out = params_.create_zeros("dec.out.b", {config_.vocab_size});
    init_h_w_ = params_.create_xavier("dec.init_h.w", {init_in_dim, config_.dec_hidden}, rng);
    init_h_b_ = params_.create_zeros("dec.init_h.b", {config_.dec_hidden});
    init_c_w_ = params_.create_xavier("dec.init_c.w", {init_in_dim, config_.dec_hidden}, rng);
    init_c_b_ = params_.create_zeros("dec.init_c.b", {config_.dec_hidden});
  }

  Tensor embed_token(int id) const {
    return row(gather_rows(embed_, std::vector<int>{id}), 0);
  }

  // mean word-encoder state of the raw answer text; zero when a span exists
  Tensor answer_vector(const QGInstance& inst) const {
    if (inst.answer_span || inst.answer_tokens.empty()) {
      return Tensor::zeros({2 * config_.hidden});
    }
    std::vector<Bio> tags(inst.answer_tokens.size(), Bio::O);
    return sentence_repr_mean(encode_words(inst.answer_tokens, tags, embed_, bio_embed_, wenc_));
  }

  LstmState initial_state(const Tensor& encoder_summary, const Tensor& answer_vec) const {
    Tensor init_in = concat({encoder_summary, answer_vec}, 0);
    return {add(vecmat(init_in, init_h_w_), init_h_b_),
            add(vecmat(init_in, init_c_w_), init_c_b_)};
  }

  // final forward state ; final backward state of a BiLSTM output matrix
  Tensor summary_of(const Tensor& enc, int hidden) const {
    Tensor fwd_last = slice(row(enc, enc.rows() - 1), 0, 0, hidden);
    Tensor bwd_first = slice(row(enc, 0), 0, hidden, hidden);
    return concat({fwd_last, bwd_first}, 0);
  }

  Tensor embed_, bio_embed_;
  BilstmParams wenc_;
  LstmDecoderParams dec_;
  Tensor init_h_w_, init_h_b_, init_c_w_, init_c_b_;
};

class FlatLstmModel final : public LstmModelBase {
 public:
  FlatLstmModel(Config config, Rng& rng)
      : LstmModelBase(std::move(config), rng, 4 * config.hidden) {
    attn_w_ = params_.create_xavier(
        "attn.word.w", {config_.attn_dim, 2 * config_.hidden + config_.dec_hidden}, rng);
    attn_v_ = params_.create_uniform("attn.word.v", {config_.attn_dim}, -0.1, 0.1, rng);
  }

  bool has_hierarchical_attention() const override { return false; }

  Tensor forward_loss(const std::vector<QGInstance>& batch) override {
    check_batch(batch);
    std::vector<std::pair<Tensor, int>> losses;
    for (const auto& inst : batch) {
      Tensor enc = encode(inst);
      std::vector<int> inputs, targets;
      teacher_pair(inst, config_.max_question_tokens, inputs, targets);
      LstmState state = initial_state(summary_of(enc, config_.hidden), answer_vector(inst));
      std::vector<Tensor> logit_rows;
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto [logits, next] = step(enc, state, inputs[t]);
        logit_rows.push_back(as_row(logits));
        state = next;
      }
      losses.emplace_back(cross_entropy_rows(concat(logit_rows, 0), targets),
                          static_cast<int>(targets.size()));
    }
    return combine_batch_losses(losses);
  }

  std::unique_ptr<DecodeSession> begin_decode(const QGInstance& inst) override;

 private:
  friend class FlatLstmSession;

  Tensor encode(const QGInstance& inst) const {
    std::vector<int> ids;
    std::vector<Bio> tags;
    flatten_instance(inst, ids, tags);
    return encode_words(ids, tags, embed_, bio_embed_, wenc_);
  }

  std::pair<Tensor, LstmState> step(const Tensor& enc, const LstmState& state, int prev_id) const {
    Tensor weights = softmax(additive_scores(enc, state.h, attn_w_, attn_v_));
    Tensor context = vecmat(weights, enc);
    return lstm_decoder_step(embed_token(prev_id), state, context, dec_);
  }

  Tensor attn_w_, attn_v_;
};

class FlatLstmSession final : public DecodeSession {
 public:
  FlatLstmSession(const FlatLstmModel& model, const QGInstance& inst) : model_(model) {
    NoGradGuard ng;
    enc_ = model.encode(inst);
    init_ = model.initial_state(model.summary_of(enc_, model.config().hidden),
                                model.answer_vector(inst));
  }

  std::vector<double> next_logprobs(const std::vector<int>& prefix) override {
    NoGradGuard ng;
    LstmState state = init_;
    Tensor logits;
    for (int id : prefix) {
      auto [l, next] = model_.step(enc_, state, id);
      logits = l;
      state = next;
    }
    return logprobs_from_logits(logits);
  }

 private:
  const FlatLstmModel& model_;
  Tensor enc_;
  LstmState init_;
};

std::unique_ptr<DecodeSession> FlatLstmModel::begin_decode(const QGInstance& inst) {
  return std::make_unique<FlatLstmSession>(*this, inst);
}

class HierLstmModel final : public LstmModelBase {
 public:
  HierLstmModel(Config config, Rng& rng)
      : LstmModelBase(std::move(config), rng, 2 * config.hidden + 2 * config.hidden),
        flag_embed_(params_.create_uniform("embed.flag", {2, config_.flag_dim}, -0.1, 0.1, rng)),
        senc_(make_bilstm(params_, "senc", 2 * config_.hidden + config_.flag_dim, config_.hidden,
                          rng)) {
    hier_.w_word = params_.create_xavier(
        "attn.word.w", {config_.attn_dim, 2 * config_.hidden + config_.dec_hidden}, rng);
    hier_.v_word = params_.create_uniform("attn.word.v", {config_.attn_dim}, -0.1, 0.1, rng);
    hier_.w_sent = params_.create_xavier(
        "attn.sent.w", {config_.attn_dim, 2 * config_.hidden + config_.dec_hidden}, rng);
    hier_.v_sent = params_.create_uniform("attn.sent.v", {config_.attn_dim}, -0.1, 0.1, rng);
  }

  bool has_hierarchical_attention() const override { return true; }

  Tensor forward_loss(const std::vector<QGInstance>& batch) override {
    check_batch(batch);
    std::vector<std::pair<Tensor, int>> losses;
    for (const auto& inst : batch) {
      EncodedParagraph enc = encode(inst);
      std::vector<int> inputs, targets;
      teacher_pair(inst, config_.max_question_tokens, inputs, targets);
      LstmState state = initial_state(summary_of(enc.contextual_sentences, config_.hidden),
                                      answer_vector(inst));
      std::vector<Tensor> logit_rows;
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto [logits, next] = step(enc, state, inputs[t], nullptr);
        logit_rows.push_back(as_row(logits));
        state = next;
      }
      losses.emplace_back(cross_entropy_rows(concat(logit_rows, 0), targets),
                          static_cast<int>(targets.size()));
    }
    return combine_batch_losses(losses);
  }

  std::unique_ptr<DecodeSession> begin_decode(const QGInstance& inst) override;

 private:
  friend class HierLstmSession;

  EncodedParagraph encode(const QGInstance& inst) const {
    EncodedParagraph enc;
    std::vector<Tensor> mean_rows_list;
    for (std::size_t i = 0; i < inst.paragraph.size(); ++i) {
      Tensor r = encode_words(inst.paragraph[i], inst.bio_tags[i], embed_, bio_embed_, wenc_);
      enc.word_reps.push_back(r);
      mean_rows_list.push_back(as_row(sentence_repr_mean(r)));
    }
    enc.sentence_reprs = concat(mean_rows_list, 0);
    std::vector<bool> flags(inst.sentence_has_answer.begin(), inst.sentence_has_answer.end());
    enc.contextual_sentences = encode_sentences(enc.sentence_reprs, flags, flag_embed_, senc_);
    return enc;
  }

  std::pair<Tensor, LstmState> step(const EncodedParagraph& enc, const LstmState& state,
                                    int prev_id, AttentionSnapshot* snapshot) const {
    HierContextResult ctx =
        hierarchical_context(enc.word_reps, enc.contextual_sentences, state.h, hier_,
                             config_.word_attention_per_sentence);
    if (snapshot) {
      snapshot->sentence_weights = ctx.sentence_attention.data();
      snapshot->word_weights.clear();
      int offset = 0;
      for (const auto& reps : enc.word_reps) {
        std::vector<double> w;
        for (int j = 0; j < reps.rows(); ++j) w.push_back(ctx.word_attention.at(offset + j));
        snapshot->word_weights.push_back(std::move(w));
        offset += reps.rows();
      }
    }
    return lstm_decoder_step(embed_token(prev_id), state, ctx.context, dec_);
  }

  Tensor flag_embed_;
  BilstmParams senc_;
  HierContextParams hier_;
};

class HierLstmSession final : public DecodeSession {
 public:
  HierLstmSession(const HierLstmModel& model, const QGInstance& inst) : model_(model) {
    NoGradGuard ng;
    enc_ = model.encode(inst);
    init_ = model.initial_state(
        model.summary_of(enc_.contextual_sentences, model.config().hidden),
        model.answer_vector(inst));
  }

  std::vector<double> next_logprobs(const std::vector<int>& prefix) override {
    NoGradGuard ng;
    LstmState state = init_;
    Tensor logits;
    AttentionSnapshot snap;
    for (int id : prefix) {
      auto [l, next] = model_.step(enc_, state, id, &snap);
      logits = l;
      state = next;
    }
    last_ = snap;
    return logprobs_from_logits(logits);
  }

  std::optional<AttentionSnapshot> last_attention() const override { return last_; }

 private:
  const HierLstmModel& model_;
  EncodedParagraph enc_;
  LstmState init_;
  std::optional<AttentionSnapshot> last_;
};

std::unique_ptr<DecodeSession> HierLstmModel::begin_decode(const QGInstance& inst) {
  return std::make_unique<HierLstmSession>(*this, inst);
}

// ---- Transformer architectures ---------------------------------------------------

class TransformerModelBase : public Model {
 protected:
  TransformerModelBase(Config config, Rng& rng)
      : Model(std::move(config)),
        embed_(params_.create_uniform("embed.word", {config_.vocab_size, config_.embed_dim},
                                      -0.1, 0.1, rng)) {
    const int d = config_.d_model;
    if (config_.transformer_answer_mode == "add") {
      bio_embed_ = params_.create_uniform("embed.bio", {3, d}, -0.1, 0.1, rng);
      embed_proj_w_ = params_.create_xavier("tenc.embed_proj.w", {config_.embed_dim, d}, rng);
      embed_proj_b_ = params_.create_zeros("tenc.embed_proj.b", {d});
    } else {
      bio_embed_ = params_.create_uniform("embed.bio", {3, config_.bio_dim}, -0.1, 0.1, rng);
      fuse_w_ = params_.create_xavier("tenc.fuse.w", {config_.embed_dim + config_.bio_dim, d},
                                      rng);
      fuse_b_ = params_.create_zeros("tenc.fuse.b", {d});
    }
    for (int i = 0; i < config_.enc_layers; ++i) {
      enc_blocks_.push_back(make_encoder_block(params_, "tenc.block" + std::to_string(i), d,
                                               config_.heads, config_.ffn_dim, rng));
    }
    tgt_proj_w_ = params_.create_xavier("tdec.embed_proj.w", {config_.embed_dim, d}, rng);
    tgt_proj_b_ = params_.create_zeros("tdec.embed_proj.b", {d});
    ans_inject_w_ = params_.create_xavier("ans.inject.w", {d, d}, rng);
    out_w_ = params_.create_xavier("tdec.out.w", {d, config_.vocab_size}, rng);
    out_b_ = params_.create_zeros("tdec.out.b", {config_.vocab_size});
  }

  // word + BIO features fused into d_model rows (no positional encoding yet)
  Tensor fuse_tokens(const std::vector<int>& ids, const std::vector<Bio>& tags) const {
    Tensor word_rows = gather_rows(embed_, ids);
    std::vector<int> tag_ids;
    tag_ids.reserve(tags.size());
    for (Bio b : tags) tag_ids.push_back(static_cast<int>(b));
    Tensor bio_rows = gather_rows(bio_embed_, tag_ids);
    if (config_.transformer_answer_mode == "add") {
      return add(add_bias(matmul(word_rows, embed_proj_w_), embed_proj_b_), bio_rows);
    }
    return add_bias(matmul(concat({word_rows, bio_rows}, 1), fuse_w_), fuse_b_);
  }

  // mean encoder state of the raw answer text; zero when a span exists
  Tensor answer_vector(const QGInstance& inst) const {
    if (inst.answer_span || inst.answer_tokens.empty()) {
      return Tensor::zeros({config_.d_model});
    }
    std::vector<Bio> tags(inst.answer_tokens.size(), Bio::O);
    Tensor r = transformer_encode(fuse_tokens(inst.answer_tokens, tags), enc_blocks_);
    return mean_rows(r);
  }

  // target prefix rows: projected embeddings, answer vector injected at BOS
  Tensor target_rows(const std::vector<int>& inputs, const Tensor& answer_vec) const {
    Tensor rows = add_bias(matmul(gather_rows(embed_, inputs), tgt_proj_w_), tgt_proj_b_);
    Tensor bos = add(row(rows, 0), vecmat(answer_vec, ans_inject_w_));
    if (rows.rows() == 1) return as_row(bos);
    return concat({as_row(bos), slice(rows, 0, 1, rows.rows() - 1)}, 0);
  }

  Tensor embed_, bio_embed_;
  Tensor fuse_w_, fuse_b_;
  Tensor embed_proj_w_, embed_proj_b_;
  std::vector<EncoderBlockParams> enc_blocks_;
  Tensor tgt_proj_w_, tgt_proj_b_;
  Tensor ans_inject_w_;
  Tensor out_w_, out_b_;
};

class FlatTransformerModel final : public TransformerModelBase {
 public:
  FlatTransformerModel(Config config, Rng& rng) : TransformerModelBase(std::move(config), rng) {
    for (int i = 0; i < config_.dec_layers; ++i) {
      dec_blocks_.push_back(make_flat_decoder_block(params_, "tdec.block" + std::to_string(i),
                                                    config_.d_model, config_.heads,
                                                    config_.ffn_dim, rng));
    }
  }

  bool has_hierarchical_attention() const override { return false; }

  Tensor forward_loss(const std::vector<QGInstance>& batch) override {
    check_batch(batch);
    std::vector<std::pair<Tensor, int>> losses;
    for (const auto& inst : batch) {
      Tensor enc_out = encode(inst);
      std::vector<int> inputs, targets;
      teacher_pair(inst, config_.max_question_tokens, inputs, targets);
      Tensor tgt = target_rows(inputs, answer_vector(inst));
      Tensor hidden = flat_decoder_forward(tgt, enc_out, dec_blocks_);
      Tensor logits = add_bias(matmul(hidden, out_w_), out_b_);
      losses.emplace_back(cross_entropy_rows(logits, targets),
                          static_cast<int>(targets.size()));
    }
    return combine_batch_losses(losses);
  }

  std::unique_ptr<DecodeSession> begin_decode(const QGInstance& inst) override;

 private:
  friend class FlatTransformerSession;

  Tensor encode(const QGInstance& inst) const {
    std::vector<int> ids;
    std::vector<Bio> tags;
    flatten_instance(inst, ids, tags);
    return transformer_encode(fuse_tokens(ids, tags), enc_blocks_);
  }

  std::vector<FlatDecoderBlockParams> dec_blocks_;
};

class FlatTransformerSession final : public DecodeSession {
 public:
  FlatTransformerSession(const FlatTransformerModel& model, const QGInstance& inst)
      : model_(model) {
    NoGradGuard ng;
    enc_out_ = model.encode(inst);
    answer_vec_ = model.answer_vector(inst);
  }

  std::vector<double> next_logprobs(const std::vector<int>& prefix) override {
    NoGradGuard ng;
    Tensor tgt = model_.target_rows(prefix, answer_vec_);
    Tensor hidden = flat_decoder_forward(tgt, enc_out_, model_.dec_blocks_);
    Tensor logits = add(vecmat(row(hidden, hidden.rows() - 1), model_.out_w_), model_.out_b_);
    return logprobs_from_logits(logits);
  }

 private:
  const FlatTransformerModel& model_;
  Tensor enc_out_;
  Tensor answer_vec_;
};

std::unique_ptr<DecodeSession> FlatTransformerModel::begin_decode(const QGInstance& inst) {
  return std::make_unique<FlatTransformerSession>(*this, inst);
}

class HierTransformerModel final : public TransformerModelBase {
 public:
  HierTransformerModel(Config config, Rng& rng) : TransformerModelBase(std::move(config), rng) {
    const int d = config_.d_model;
    para_proj_w_ = params_.create_xavier("penc.proj.w", {2 * d, d}, rng);
    para_proj_b_ = params_.create_zeros("penc.proj.b", {d});
    for (int i = 0; i < config_.enc_layers; ++i) {
      para_blocks_.push_back(make_encoder_block(params_, "penc.block" + std::to_string(i), d,
                                                config_.heads, config_.ffn_dim, rng));
    }
    for (int i = 0; i < config_.dec_layers; ++i) {
      dec_.blocks.push_back(make_hier_decoder_block(params_, "tdec.block" + std::to_string(i), d,
                                                    config_.heads, config_.ffn_dim, rng));
    }
    dec_.wq_s = params_.create_xavier("tdec.qs.w", {d, d}, rng);
    dec_.bq_s = params_.create_zeros("tdec.qs.b", {d});
    dec_.wq_w = params_.create_xavier("tdec.qw.w", {d, d}, rng);
    dec_.bq_w = params_.create_zeros("tdec.qw.b", {d});
    dec_.h_init = params_.create_uniform("tdec.h_init", {d}, -0.1, 0.1, rng);
  }

  bool has_hierarchical_attention() const override { return true; }

  Tensor forward_loss(const std::vector<QGInstance>& batch) override {
    check_batch(batch);
    std::vector<std::pair<Tensor, int>> losses;
    for (const auto& inst : batch) {
      HattInputs source = encode(inst);
      std::vector<int> inputs, targets;
      teacher_pair(inst, config_.max_question_tokens, inputs, targets);
      Tensor answer_vec = answer_vector(inst);
      Tensor h_prev = dec_.h_init;
      std::vector<Tensor> logit_rows;
      for (std::size_t t = 1; t <= inputs.size(); ++t) {
        std::vector<int> prefix(inputs.begin(), inputs.begin() + static_cast<std::ptrdiff_t>(t));
        auto res = hier_decoder_step(target_rows(prefix, answer_vec), h_prev, source, dec_,
                                     config_.hatt_scale_kind());
        logit_rows.push_back(as_row(add(vecmat(res.hidden, out_w_), out_b_)));
        h_prev = res.hidden;
      }
      losses.emplace_back(cross_entropy_rows(concat(logit_rows, 0), targets),
                          static_cast<int>(targets.size()));
    }
    return combine_batch_losses(losses);
  }

  std::unique_ptr<DecodeSession> begin_decode(const QGInstance& inst) override;

 private:
  friend class HierTransformerSession;

  // sentence-level transformer then paragraph-level transformer; the word
  // reps serve as word keys/values, the paragraph states as sentence keys
  HattInputs encode(const QGInstance& inst) const {
    HattInputs source;
    std::vector<Tensor> sent_rows;
    for (std::size_t i = 0; i < inst.paragraph.size(); ++i) {
      Tensor r = transformer_encode(fuse_tokens(inst.paragraph[i], inst.bio_tags[i]),
                                    enc_blocks_);
      source.K_w.push_back(r);
      source.V_w.push_back(r);
      sent_rows.push_back(as_row(sentence_repr_boseos(r)));
    }
    source.K_s = encode_paragraph_transformer(concat(sent_rows, 0), para_proj_w_, para_proj_b_,
                                              para_blocks_);
    source.q_s = Tensor::zeros({config_.d_model});  // set per step from h_prev
    source.q_w = Tensor::zeros({config_.d_model});
    return source;
  }

  Tensor para_proj_w_, para_proj_b_;
  std::vector<EncoderBlockParams> para_blocks_;
  HierDecoderParams dec_;
};

class HierTransformerSession final : public DecodeSession {
 public:
  HierTransformerSession(const HierTransformerModel& model, const QGInstance& inst)
      : model_(model) {
    NoGradGuard ng;
    source_ = model.encode(inst);
    answer_vec_ = model.answer_vector(inst);
  }

  std::vector<double> next_logprobs(const std::vector<int>& prefix) override {
    NoGradGuard ng;
    Tensor h_prev = model_.dec_.h_init;
    auto cached = state_cache_.find(key_of(prefix, prefix.size() - 1));
    std::size_t start = 1;
    if (prefix.size() > 1 && cached != state_cache_.end()) {
      h_prev = cached->second;
      start = prefix.size();
    }
    HierDecoderStepResult res;
    for (std::size_t t = start; t <= prefix.size(); ++t) {
      std::vector<int> sub(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(t));
      res = hier_decoder_step(model_.target_rows(sub, answer_vec_), h_prev, source_, model_.dec_,
                              model_.config().hatt_scale_kind());
      h_prev = res.hidden;
    }
    state_cache_[key_of(prefix, prefix.size())] = h_prev;
    last_ = AttentionSnapshot{res.last_block_attention.sentence_weights,
                              res.last_block_attention.word_weights};
    Tensor logits = add(vecmat(res.hidden, model_.out_w_), model_.out_b_);
    return logprobs_from_logits(logits);
  }

  std::optional<AttentionSnapshot> last_attention() const override { return last_; }

 private:
  static std::string key_of(const std::vector<int>& prefix, std::size_t len) {
    std::string k;
    for (std::size_t i = 0; i < len; ++i) {
      k += std::to_string(prefix[i]);
      k.push_back(',');
    }
    return k;
  }

  const HierTransformerModel& model_;
  HattInputs source_;
  Tensor answer_vec_;
  std::unordered_map<std::string, Tensor> state_cache_;
  std::optional<AttentionSnapshot> last_;
};

std::unique_ptr<DecodeSession> HierTransformerModel::begin_decode(const QGInstance& inst) {
  return std::make_unique<HierTransformerSession>(*this, inst);
}

}  // namespace

std::unique_ptr<Model> build_model(const Config& config, const EmbeddingTable* pretrained) {
  validate(config);
  Rng rng(config.seed);
  std::unique_ptr<Model> model;
  switch (config.architecture()) {
    case Arch::Seq2SeqAttAE: model = std::make_unique<FlatLstmModel>(config, rng); break;
    case Arch::HierSeq2SeqAE: model = std::make_unique<HierLstmModel>(config, rng); break;
    case Arch::TransSeq2SeqAE: model = std::make_unique<FlatTransformerModel>(config, rng); break;
    case Arch::HierTransSeq2SeqAE:
      model = std::make_unique<HierTransformerModel>(config, rng);
      break;
  }
  if (pretrained) {
    Tensor& table = model->params().get("embed.word");
    if (table.shape() != pretrained->matrix.shape()) {
      throw std::invalid_argument("pretrained embeddings are " +
                                  shape_str(pretrained->matrix.shape()) + " but the model needs " +
                                  shape_str(table.shape()));
    }
    table.data() = pretrained->matrix.data();
  }
  return model;
}

}  // namespace hiergen
