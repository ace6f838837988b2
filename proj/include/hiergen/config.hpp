#pragma once

#include <cstdint>
#include <string>

#include "hiergen/attention.hpp"

namespace hiergen {

enum class Arch { Seq2SeqAttAE, HierSeq2SeqAE, TransSeq2SeqAE, HierTransSeq2SeqAE };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

// Every knob of the artifact. Parsed from `key = value` files, overridable
// from the command line; unknown keys are rejected.
struct Config {
  // model
  std::string arch = "HierSeq2SeqAE";
  int vocab_size = 45000;
  int embed_dim = 300;
  int hidden = 256;      // word/sentence BiLSTM size per direction
  int dec_hidden = 512;  // decoder LSTM size
  int attn_dim = 256;    // additive attention inner dim
  int bio_dim = 16;
  int flag_dim = 16;
  int d_model = 128;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_dim = 512;
  std::string hatt_scale = "sqrt_d";  // or "d"
  bool word_attention_per_sentence = false;
  std::string transformer_answer_mode = "concat_project";  // or "add"

  // data
  std::string format = "squad";  // or "marco"
  int max_sentences = 20;
  int max_sentence_tokens = 50;
  int max_question_tokens = 30;
  int min_freq = 2;
  double split_ratio = 0.9;
  std::string embeddings_path;  // optional pretrained word vectors

  // training
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  int batch_size = 32;
  int epochs = 10;
  int patience = 3;

  // decoding
  int beam = 1;
  double length_norm = 0.7;
  int max_decode_len = 30;

  std::uint64_t seed = 1234;

  Arch architecture() const { return arch_from_name(arch); }
  HattScale hatt_scale_kind() const;
};

Config parse_config_file(const std::string& path);
// "key=value"; throws std::invalid_argument on unknown key or bad value
void apply_override(Config& config, const std::string& assignment);
// sorted `key = value` lines; the resolved-config echo
std::string config_to_string(const Config& config);
// FNV-1a hash of the resolved string, hex
std::string config_hash(const Config& config);
// cross-field checks (divisibility, positive dims); throws std::invalid_argument
void validate(const Config& config);

}  // namespace hiergen
