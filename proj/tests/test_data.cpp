#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "hiergen/data.hpp"

using namespace hiergen;

namespace {

const std::string kFixtures = FIXTURE_DIR;

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = std::string("./") + name;
  std::ofstream f(path);
  f << content;
  return path;
}

}  // namespace

TEST_CASE("load_squad counts and content") {
  auto records = load_squad(kFixtures + "/squad_small.json");
  CHECK(records.size() == 17);
  // paragraph text passes through unmodified
  CHECK(records[0].paragraph.find("Dr. Melvin Calvin mapped the carbon fixation cycle") !=
        std::string::npos);
  CHECK(records[1].paragraph == records[0].paragraph);
  CHECK(records[0].answer == "chemical energy");
  CHECK(records[0].answer_char_offset ==
        static_cast<long>(records[0].paragraph.find("chemical energy")));
}

TEST_CASE("load_squad cardinality cases") {
  const std::string two = write_temp(
      "squad_two.json",
      R"({"data":[{"title":"t","paragraphs":[{"context":"Alpha beta gamma.","qas":[
          {"question":"q one?","id":"a","answers":[{"text":"beta","answer_start":6}]},
          {"question":"q two?","id":"b","answers":[{"text":"gamma","answer_start":11}]}]}]}]})");
  CHECK(load_squad(two).size() == 2);

  const std::string empty = write_temp("squad_empty.json",
                                       R"({"data":[{"title":"t","paragraphs":[]}]})");
  CHECK(load_squad(empty).empty());
}

TEST_CASE("load_squad malformed json names path and byte offset") {
  const std::string bad = write_temp("squad_bad.json", R"({"data": [ {"title": )");
  try {
    load_squad(bad);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("squad_bad.json") != std::string::npos);
    CHECK(msg.find("byte") != std::string::npos);
  }
}

TEST_CASE("load_marco keeps answerable records only") {
  auto records = load_marco(kFixtures + "/marco_small.jsonl");
  CHECK(records.size() == 14);
  CHECK(records[0].question == "what is the boiling point of water");
  CHECK(records[0].paragraph.find("100 degrees celsius") != std::string::npos);
}

TEST_CASE("load_marco missing field is a parse error") {
  const std::string bad = write_temp("marco_bad.jsonl", R"({"query": "q", "answers": []})");
  CHECK_THROWS_AS(load_marco(bad), std::runtime_error);
  const std::string badj = write_temp("marco_badjson.jsonl", "{not json}\n");
  try {
    load_marco(badj);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("marco_badjson.jsonl:1") != std::string::npos);
  }
}

TEST_CASE("split_train_dev basics") {
  std::vector<int> ten(10);
  for (int i = 0; i < 10; ++i) ten[static_cast<std::size_t>(i)] = i;
  auto [train, dev] = split_train_dev(ten, 0.9, 7);
  CHECK(train.size() == 9);
  CHECK(dev.size() == 1);

  auto [train2, dev2] = split_train_dev(ten, 0.9, 7);
  CHECK(train == train2);
  CHECK(dev == dev2);

  CHECK_THROWS_AS(split_train_dev(ten, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_train_dev(ten, 1.0, 1), std::invalid_argument);
}

TEST_CASE("split_train_dev matches the 71k/8k proportions at marco scale") {
  std::vector<int> big(79000);
  auto [train, dev] = split_train_dev(big, 0.9, 3);
  CHECK(train.size() == 71100);
  CHECK(dev.size() == 7900);
}

TEST_CASE("split_train_dev partitions the input") {
  std::vector<int> xs(137);
  for (int i = 0; i < 137; ++i) xs[static_cast<std::size_t>(i)] = i;
  auto [train, dev] = split_train_dev(xs, 0.8, 99);
  std::vector<int> all = train;
  all.insert(all.end(), dev.begin(), dev.end());
  std::sort(all.begin(), all.end());
  CHECK(all == xs);  // disjoint union == input
}

TEST_CASE("sentence_split rules") {
  CHECK(sentence_split("A b. C d.") == std::vector<std::string>{"A b.", "C d."});
  auto dr = sentence_split("Dr. Smith ran. He won.");
  CHECK(dr.size() == 2);
  CHECK(dr[0] == "Dr. Smith ran.");
  CHECK(dr[1] == "He won.");
  CHECK(sentence_split("no terminator here") == std::vector<std::string>{"no terminator here"});
  CHECK(sentence_split("In the U.S. He stayed.") ==
        std::vector<std::string>{"In the U.S. He stayed."});
  CHECK(sentence_split("It cost 5.50 dollars. Cheap!") ==
        std::vector<std::string>{"It cost 5.50 dollars.", "Cheap!"});
  CHECK(sentence_split("Really? Yes. 1986 was the year.").size() == 3);
  CHECK_THROWS_AS(sentence_split(""), std::invalid_argument);
}

TEST_CASE("sentence spans tile the input exactly") {
  for (const auto& rec : load_squad(kFixtures + "/squad_small.json")) {
    auto spans = sentence_split_spans(rec.paragraph);
    std::string rebuilt;
    std::size_t prev_end = 0;
    for (auto [b, e] : spans) {
      CHECK(b == prev_end);
      prev_end = e;
      rebuilt += rec.paragraph.substr(b, e - b);
    }
    CHECK(prev_end == rec.paragraph.size());
    CHECK(rebuilt == rec.paragraph);
  }
}

TEST_CASE("tokenize rules") {
  CHECK(tokenize("Who won?") == std::vector<std::string>{"who", "won", "?"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("It's 1986.") == std::vector<std::string>{"it", "'", "s", "1986", "."});
  CHECK(tokenize("a(b)c") == std::vector<std::string>{"a", "(", "b", ")", "c"});
  CHECK(tokenize("  spaced\tout  ") == std::vector<std::string>{"spaced", "out"});
}

TEST_CASE("bio_tag rules") {
  std::vector<std::string> para{"a", "b", "c", "d"};
  auto tags = bio_tag(para, {"b", "c"});
  CHECK(tags == std::vector<Bio>{Bio::O, Bio::B, Bio::I, Bio::O});

  CHECK(bio_tag(para, {"z"}) == std::vector<Bio>(4, Bio::O));
  CHECK(bio_tag(para, {}) == std::vector<Bio>(4, Bio::O));

  std::vector<std::string> twice{"x", "a", "b", "y", "a", "b"};
  auto t2 = bio_tag(twice, {"a", "b"});
  CHECK(t2 == std::vector<Bio>{Bio::O, Bio::B, Bio::I, Bio::O, Bio::O, Bio::O});
}

TEST_CASE("build_vocab ordering and limits") {
  std::map<std::string, long long> freq{{"a", 2}, {"b", 1}};
  Vocab v1 = build_vocab(freq, 45000, 1);
  CHECK(v1.size() == 6);
  CHECK(v1.id("a") == 4);
  CHECK(v1.id("b") == 5);
  CHECK(v1.id("zzz") == Vocab::kUnk);

  Vocab v2 = build_vocab(freq, 45000, 2);
  CHECK(v2.size() == 5);
  CHECK(v2.id("b") == Vocab::kUnk);

  std::map<std::string, long long> tie{{"y", 3}, {"x", 3}};
  Vocab v3 = build_vocab(tie, 45000, 1);
  CHECK(v3.id("x") == 4);
  CHECK(v3.id("y") == 5);

  Vocab v4 = build_vocab(freq, 5, 1);  // cap includes the 4 reserved entries
  CHECK(v4.size() == 5);
  CHECK(v4.id("a") == 4);
  CHECK(v4.id("b") == Vocab::kUnk);
}

TEST_CASE("vocab save/load round trip") {
  std::map<std::string, long long> freq{{"river", 5}, {"water", 3}, {"the", 9}};
  Vocab v = build_vocab(freq, 45000, 1);
  v.save("./vocab_rt.txt");
  Vocab r = Vocab::load("./vocab_rt.txt");
  CHECK(r.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(r.token(i) == v.token(i));
}

TEST_CASE("load_embeddings hits, misses, pad row") {
  std::map<std::string, long long> freq{{"the", 5}, {"water", 3}, {"notinfile", 2}};
  Vocab v = build_vocab(freq, 45000, 1);
  EmbeddingTable table = load_embeddings(kFixtures + "/vectors_toy.txt", v, 8, 13);
  CHECK(table.dim == 8);
  CHECK(table.hits == 2);
  CHECK(table.misses == v.size() - 2);

  // "the" is the first line of the fixture: values (i+1)*0.01*(j+1) pattern
  const int the_id = v.id("the");
  CHECK(table.matrix.at(the_id, 0) == doctest::Approx(-0.44).epsilon(1e-12));

  for (int j = 0; j < 8; ++j) CHECK(table.matrix.at(Vocab::kPad, j) == 0.0);

  const int miss_id = v.id("notinfile");
  for (int j = 0; j < 8; ++j) {
    CHECK(table.matrix.at(miss_id, j) >= -0.1);
    CHECK(table.matrix.at(miss_id, j) <= 0.1);
  }
}

TEST_CASE("load_embeddings wrong arity names the line") {
  std::map<std::string, long long> freq{{"a", 1}};
  Vocab v = build_vocab(freq, 45000, 1);
  const std::string bad = write_temp("vec_bad.txt", "a 0.1 0.2\nb 0.1\n");
  try {
    load_embeddings(bad, v, 2, 1);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("preprocess and encode fixture records: invariants hold") {
  Limits limits;
  auto records = load_squad(kFixtures + "/squad_small.json");
  std::vector<TokenizedInstance> instances;
  for (std::size_t i = 0; i < records.size(); ++i) {
    instances.push_back(preprocess_record(records[i], "sq" + std::to_string(i), limits));
  }
  std::map<std::string, long long> freq = count_tokens(instances);
  Vocab vocab = build_vocab(freq, 45000, 1);
  int with_span = 0;
  for (const auto& inst : instances) {
    QGInstance q = encode_instance(inst, vocab);
    q.check_invariants();  // throws on violation
    if (q.answer_span) ++with_span;
    // encode -> decode round trip on the question (fixture tokens all in vocab)
    CHECK(vocab.decode(vocab.encode(inst.question)) == inst.question);
  }
  CHECK(with_span == 17);  // every fixture answer is a verbatim span
}

TEST_CASE("marco no-span answers are retained with all-O tags") {
  Limits limits;
  auto records = load_marco(kFixtures + "/marco_small.jsonl");
  int spans = 0, nospans = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    TokenizedInstance inst = preprocess_record(records[i], "m" + std::to_string(i), limits);
    if (inst.span) {
      ++spans;
    } else {
      ++nospans;
      for (const auto& tags : inst.bio) {
        for (Bio b : tags) CHECK(b == Bio::O);
      }
      CHECK(!inst.answer_tokens.empty());
    }
  }
  CHECK(spans == 9);
  CHECK(nospans == 5);
}

TEST_CASE("answer occurring twice tags the leftmost occurrence") {
  RawRecord rec;
  rec.paragraph = "The cat sat. The cat ran.";
  rec.question = "what sat?";
  rec.answer = "the cat";
  TokenizedInstance inst = preprocess_record(rec, "t", Limits{});
  REQUIRE(inst.span.has_value());
  CHECK(inst.span->sentence == 0);
  CHECK(inst.span->start == 0);
  CHECK(inst.bio[0][0] == Bio::B);
  CHECK(inst.bio[0][1] == Bio::I);
  for (Bio b : inst.bio[1]) CHECK(b == Bio::O);
  CHECK(inst.has_answer == std::vector<bool>{true, false});
}

TEST_CASE("limits truncate rather than crash") {
  RawRecord rec;
  rec.paragraph = "One two three four five six seven. Second sentence here. Third one now.";
  rec.question = "a very long question with many words in it?";
  rec.answer = "three four";
  Limits tight;
  tight.max_sentences = 2;
  tight.max_sentence_tokens = 5;
  tight.max_question_tokens = 4;
  TokenizedInstance inst = preprocess_record(rec, "t", tight);
  CHECK(inst.sentences.size() == 2);
  CHECK(inst.sentences[0].size() == 5);
  CHECK(inst.question.size() == 4);
  REQUIRE(inst.span.has_value());  // "three four" survives at positions 2..3
  CHECK(inst.span->start == 2);
}

TEST_CASE("jsonl round trip") {
  Limits limits;
  auto records = load_marco(kFixtures + "/marco_small.jsonl");
  std::vector<TokenizedInstance> instances;
  for (std::size_t i = 0; i < records.size(); ++i) {
    instances.push_back(preprocess_record(records[i], "m" + std::to_string(i), limits));
  }
  write_instances_jsonl("./instances_rt.jsonl", instances);
  auto back = read_instances_jsonl("./instances_rt.jsonl");
  REQUIRE(back.size() == instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == instances[i].id);
    CHECK(back[i].sentences == instances[i].sentences);
    CHECK(back[i].question == instances[i].question);
    CHECK(back[i].answer_tokens == instances[i].answer_tokens);
    CHECK(back[i].bio == instances[i].bio);
    CHECK(back[i].has_answer == instances[i].has_answer);
    CHECK(back[i].span == instances[i].span);
  }
}
