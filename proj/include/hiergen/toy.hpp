#pragma once

#include <map>
#include <string>

#include "hiergen/config.hpp"
#include "hiergen/data.hpp"

namespace hiergen {

// Built-in two-sentence example with a tiny config; the fixture behind the
// gradcheck command and the learnability checks.
struct ToySetup {
  Vocab vocab;
  QGInstance instance;         // answer span present
  QGInstance nospan_instance;  // answer not a subspan of the paragraph
  Config config;
};

inline ToySetup make_toy_setup(const std::string& arch, std::uint64_t seed = 5) {
  ToySetup setup;

  RawRecord rec;
  rec.paragraph = "The cat sat on the mat. The dog ran fast.";
  rec.question = "what did the cat do ?";
  rec.answer = "the cat";
  TokenizedInstance tok = preprocess_record(rec, "toy", Limits{});

  RawRecord nospan = rec;
  nospan.answer = "a sleepy feline";
  TokenizedInstance tok2 = preprocess_record(nospan, "toy-nospan", Limits{});

  std::map<std::string, long long> freq = count_tokens({tok, tok2});
  setup.vocab = build_vocab(freq, 45000, 1);
  setup.instance = encode_instance(tok, setup.vocab);
  setup.nospan_instance = encode_instance(tok2, setup.vocab);

  Config& c = setup.config;
  c.arch = arch;
  c.vocab_size = setup.vocab.size();
  c.embed_dim = 10;
  c.hidden = 6;
  c.dec_hidden = 8;
  c.attn_dim = 5;
  c.bio_dim = 3;
  c.flag_dim = 3;
  c.d_model = 8;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn_dim = 12;
  c.max_question_tokens = 10;
  c.max_decode_len = 12;
  c.seed = seed;
  return setup;
}

}  // namespace hiergen
