#include <doctest.h>

#include <fstream>
#include <stdexcept>

#include "hiergen/config.hpp"

using namespace hiergen;

TEST_CASE("overrides parse and unknown keys are rejected") {
  Config c;
  apply_override(c, "hidden=128");
  CHECK(c.hidden == 128);
  apply_override(c, "lr = 0.005");
  CHECK(c.lr == doctest::Approx(0.005));
  apply_override(c, "arch=TransSeq2SeqAE");
  CHECK(c.architecture() == Arch::TransSeq2SeqAE);
  apply_override(c, "word_attention_per_sentence=true");
  CHECK(c.word_attention_per_sentence);

  CHECK_THROWS_AS(apply_override(c, "no_such_key=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(c, "hidden=abc"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(c, "hidden"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(c, "arch=Bogus"), std::invalid_argument);
}

TEST_CASE("config file parsing with comments") {
  {
    std::ofstream f("./test_cfg.txt");
    f << "# a comment\n";
    f << "arch = HierTransSeq2SeqAE\n";
    f << "\n";
    f << "d_model = 64\n";
    f << "seed = 99\n";
  }
  Config c = parse_config_file("./test_cfg.txt");
  CHECK(c.arch == "HierTransSeq2SeqAE");
  CHECK(c.d_model == 64);
  CHECK(c.seed == 99);

  {
    std::ofstream f("./test_cfg_bad.txt");
    f << "bogus_key = 1\n";
  }
  try {
    parse_config_file("./test_cfg_bad.txt");
    FAIL("expected error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("test_cfg_bad.txt:1") != std::string::npos);
  }
}

TEST_CASE("resolved echo covers every key and hashes deterministically") {
  Config c;
  const std::string echo = config_to_string(c);
  for (const char* key : {"arch", "vocab_size", "lr", "seed", "beam", "hatt_scale"}) {
    CHECK(echo.find(std::string(key) + " = ") != std::string::npos);
  }
  CHECK(config_hash(c) == config_hash(Config{}));
  Config d;
  d.hidden = 300;
  CHECK(config_hash(c) != config_hash(d));
}

TEST_CASE("validation catches bad cross-field combinations") {
  Config c;
  validate(c);

  Config bad_heads = c;
  bad_heads.d_model = 100;
  bad_heads.heads = 3;
  CHECK_THROWS_AS(validate(bad_heads), std::invalid_argument);

  Config bad_scale = c;
  bad_scale.hatt_scale = "cube";
  CHECK_THROWS_AS(validate(bad_scale), std::invalid_argument);

  Config bad_ratio = c;
  bad_ratio.split_ratio = 1.5;
  CHECK_THROWS_AS(validate(bad_ratio), std::invalid_argument);

  Config bad_dim = c;
  bad_dim.hidden = 0;
  CHECK_THROWS_AS(validate(bad_dim), std::invalid_argument);

  Config bad_ffn = c;
  bad_ffn.ffn_dim = 8;
  CHECK_THROWS_AS(validate(bad_ffn), std::invalid_argument);
}
