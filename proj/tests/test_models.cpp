#include <doctest.h>

#include <cmath>

#include "hiergen/attention.hpp"
#include "hiergen/decoding.hpp"
#include "hiergen/lstm.hpp"
#include "hiergen/model.hpp"
#include "hiergen/training.hpp"
#include "testutil.hpp"
#include "toyutil.hpp"

using namespace hiergen;
using toyutil::make_toy;

namespace {
const char* kArchs[] = {"Seq2SeqAttAE", "HierSeq2SeqAE", "TransSeq2SeqAE", "HierTransSeq2SeqAE"};
}

TEST_CASE("parameter counts are frozen per toy config") {
  // deterministic function of the config; values pinned from the builder
  auto count = [](const char* arch) {
    auto setup = make_toy(arch);
    return build_model(setup.config)->params().total_parameters();
  };
  CHECK(count("Seq2SeqAttAE") == 2846);
  CHECK(count("HierSeq2SeqAE") == 4013);
  CHECK(count("TransSeq2SeqAE") == 1925);
  CHECK(count("HierTransSeq2SeqAE") == 2841);
}

TEST_CASE("flat and hierarchical LSTM share word-level parameter shapes") {
  auto flat = make_toy("Seq2SeqAttAE");
  auto hier = make_toy("HierSeq2SeqAE");
  auto fm = build_model(flat.config);
  auto hm = build_model(hier.config);
  for (const char* name : {"embed.word", "embed.bio", "wenc.fwd.w_x", "wenc.fwd.w_h",
                           "wenc.bwd.w_x", "wenc.bwd.b"}) {
    CHECK(fm->params().get(name).shape() == hm->params().get(name).shape());
  }
}

TEST_CASE("same seed builds identical initial tensors") {
  for (const char* arch : kArchs) {
    auto setup = make_toy(arch, 77);
    auto a = build_model(setup.config);
    auto b = build_model(setup.config);
    REQUIRE(a->params().items().size() == b->params().items().size());
    for (std::size_t i = 0; i < a->params().items().size(); ++i) {
      CHECK(a->params().items()[i].second.data() == b->params().items()[i].second.data());
    }
  }
}

TEST_CASE("untrained loss sits near ln |V|") {
  for (const char* arch : kArchs) {
    auto setup = make_toy(arch);
    setup.config.vocab_size = 500;  // realistic vocab-to-width ratio
    auto model = build_model(setup.config);
    Tensor loss = model->forward_loss({setup.instance});
    CHECK(std::fabs(loss.item() - std::log(500.0)) < 0.2);
    Graph::active().clear();
  }
}

TEST_CASE("duplicating an instance leaves the mean loss unchanged") {
  for (const char* arch : kArchs) {
    auto setup = make_toy(arch);
    auto model = build_model(setup.config);
    NoGradGuard ng;
    const double single = model->forward_loss({setup.instance}).item();
    const double doubled = model->forward_loss({setup.instance, setup.instance}).item();
    CHECK(single == doctest::Approx(doubled).epsilon(1e-14));
  }
}

TEST_CASE("all four architectures expose the same train/decode interface") {
  for (const char* arch : kArchs) {
    auto setup = make_toy(arch);
    auto model = build_model(setup.config);
    AdamState adam = AdamState::init(model->params(), 1e-3);

    Graph::active().clear();
    model->params().zero_grads();
    Tensor loss = model->forward_loss({setup.instance, setup.nospan_instance});
    CHECK(std::isfinite(loss.item()));
    loss.backward();
    clip_global_norm(model->params(), 5.0);
    adam_step(model->params(), adam);
    Graph::active().clear();

    std::vector<int> generated = greedy_decode(*model, setup.instance, 8);
    CHECK(static_cast<int>(generated.size()) <= 8);
    for (int tok : generated) {
      CHECK(tok != Vocab::kPad);
      CHECK(tok != Vocab::kBos);
      CHECK(tok != Vocab::kEos);
    }
  }
}

TEST_CASE("hierarchical attention flag matches architecture") {
  CHECK_FALSE(build_model(make_toy("Seq2SeqAttAE").config)->has_hierarchical_attention());
  CHECK(build_model(make_toy("HierSeq2SeqAE").config)->has_hierarchical_attention());
  CHECK_FALSE(build_model(make_toy("TransSeq2SeqAE").config)->has_hierarchical_attention());
  CHECK(build_model(make_toy("HierTransSeq2SeqAE").config)->has_hierarchical_attention());
}

TEST_CASE("single-sentence hierarchical context reduces to flat attention") {
  // same word reps, same attention parameters: the hierarchical formula with
  // K=1 must produce the flat attention context exactly
  Rng rng(31);
  const int word_dim = 6, dec_dim = 4, attn = 5;
  Tensor reps = Tensor::uniform({5, word_dim}, -1, 1, rng);
  Tensor dec = Tensor::uniform({dec_dim}, -1, 1, rng);
  HierContextParams p;
  p.w_word = Tensor::uniform({attn, word_dim + dec_dim}, -0.5, 0.5, rng);
  p.v_word = Tensor::uniform({attn}, -0.5, 0.5, rng);
  p.w_sent = Tensor::uniform({attn, 8 + dec_dim}, -0.5, 0.5, rng);
  p.v_sent = Tensor::uniform({attn}, -0.5, 0.5, rng);

  Tensor flat_ctx = vecmat(softmax(additive_scores(reps, dec, p.w_word, p.v_word)), reps);
  auto hier = hierarchical_context({reps}, Tensor::uniform({1, 8}, -1, 1, rng), dec, p);
  for (int j = 0; j < word_dim; ++j) {
    CHECK(hier.context.at(j) == doctest::Approx(flat_ctx.at(j)).epsilon(1e-12));
  }
}

TEST_CASE("no-span instances train the answer-encoding path") {
  for (const char* arch : {"HierSeq2SeqAE", "TransSeq2SeqAE"}) {
    auto setup = make_toy(arch);
    auto model = build_model(setup.config);
    Graph::active().clear();
    model->params().zero_grads();
    model->forward_loss({setup.nospan_instance}).backward();
    const char* aux_param = std::string(arch) == "HierSeq2SeqAE" ? "dec.init_h.w" : "ans.inject.w";
    double sum_abs = 0.0;
    for (double g : model->params().get(aux_param).grad()) sum_abs += std::fabs(g);
    CHECK(sum_abs > 1e-12);
    Graph::active().clear();
  }
}

TEST_CASE("span instances leave the raw-answer path inert") {
  auto setup = make_toy("TransSeq2SeqAE");
  auto model = build_model(setup.config);
  Graph::active().clear();
  model->params().zero_grads();
  model->forward_loss({setup.instance}).backward();
  // answer vector is zero for span instances, so its injection gets no signal
  double sum_abs = 0.0;
  for (double g : model->params().get("ans.inject.w").grad()) sum_abs += std::fabs(g);
  CHECK(sum_abs == 0.0);
  Graph::active().clear();
}

TEST_CASE("over-length questions truncate instead of crashing") {
  auto setup = make_toy("Seq2SeqAttAE");
  setup.config.max_question_tokens = 3;
  auto model = build_model(setup.config);
  NoGradGuard ng;
  Tensor loss = model->forward_loss({setup.instance});  // question has 6 tokens
  CHECK(std::isfinite(loss.item()));
}

TEST_CASE("end-to-end gradients agree with finite differences") {
  for (const char* arch : kArchs) {
    auto setup = make_toy(arch);
    auto model = build_model(setup.config);
    GradCheckReport report = gradcheck(*model, setup.instance, 1e-5, 1e-3, 12);
    if (!report.passed) {
      MESSAGE("arch ", arch, " worst group ", report.worst_group, " err ", report.max_rel_err);
    }
    CHECK(report.passed);
  }
}
