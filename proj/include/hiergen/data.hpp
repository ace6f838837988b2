#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hiergen/rng.hpp"
#include "hiergen/tensor.hpp"

namespace hiergen {

// ---- vocabulary -----------------------------------------------------------

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocab();

  // id for a token, UNK when absent
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // append a non-reserved token; returns its id
  int add(const std::string& token);

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// tokens sorted by (freq desc, token asc); max_size caps the total size
// including the four reserved entries; tokens below min_freq are dropped
Vocab build_vocab(const std::map<std::string, long long>& freq, int max_size, int min_freq);

// ---- instances ------------------------------------------------------------

enum class Bio : std::uint8_t { O = 0, B = 1, I = 2 };

char bio_char(Bio b);
Bio bio_from_char(char c);

struct AnswerSpan {
  int sentence = 0;
  int start = 0;  // token index within the sentence
  int end = 0;    // inclusive
  bool operator==(const AnswerSpan&) const = default;
};

// raw (paragraph, question) pair straight from a dataset file
struct RawRecord {
  std::string paragraph;
  std::string question;
  std::string answer;
  long answer_char_offset = -1;  // -1 when the dataset gives none
};

// tokenized, sentence-split, BIO-tagged instance; tokens are strings,
// bare of BOS/EOS markers (those are added when encoding to ids)
struct TokenizedInstance {
  std::string id;
  std::string paragraph_id;  // shared by instances built from the same paragraph
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> question;
  std::vector<std::string> answer_tokens;
  std::vector<std::vector<Bio>> bio;
  std::vector<bool> has_answer;
  std::optional<AnswerSpan> span;  // indices into the bare sentence tokens
};

// id-encoded instance; every sentence begins with BOS and ends with EOS and
// bio rows align with sentence rows exactly (O at the marker positions)
struct QGInstance {
  std::string id;
  std::string paragraph_id;
  std::vector<std::vector<int>> paragraph;
  std::vector<int> question;  // no BOS/EOS
  std::vector<int> answer_tokens;
  std::vector<std::vector<Bio>> bio_tags;
  std::vector<bool> sentence_has_answer;
  std::optional<AnswerSpan> answer_span;  // indices into paragraph rows (incl. markers)

  int sentence_count() const { return static_cast<int>(paragraph.size()); }
  int total_words() const;
  void check_invariants() const;  // throws std::logic_error on violation
};

struct Limits {
  int max_sentences = 20;
  int max_sentence_tokens = 50;  // bare tokens, before BOS/EOS
  int max_question_tokens = 30;
};

// ---- loaders --------------------------------------------------------------

// SQuAD v1.1 json: one record per (paragraph, question) pair
std::vector<RawRecord> load_squad(const std::string& path);

// MS MARCO v1.1 json-lines: keeps records with at least one selected passage,
// including those whose answer is not a subspan of it
std::vector<RawRecord> load_marco(const std::string& path);

// deterministic shuffle + split; |train| = round(ratio * N)
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_dev(std::vector<T> records, double ratio,
                                                          std::uint64_t seed);

// ---- text processing ------------------------------------------------------

// [begin, end) character spans of sentences; spans tile the input exactly
std::vector<std::pair<std::size_t, std::size_t>> sentence_split_spans(const std::string& text);
// trimmed sentence texts
std::vector<std::string> sentence_split(const std::string& text);

std::vector<std::string> tokenize(const std::string& text);

// leftmost exact sub-sequence match tagged B I..I, everything else O
std::vector<Bio> bio_tag(const std::vector<std::string>& tokens,
                         const std::vector<std::string>& answer_tokens);

// full preprocessing of one raw record
TokenizedInstance preprocess_record(const RawRecord& record, const std::string& id,
                                    const Limits& limits);

// encode tokens to ids, add BOS/EOS, pad bio rows, recheck invariants
QGInstance encode_instance(const TokenizedInstance& inst, const Vocab& vocab);

std::map<std::string, long long> count_tokens(const std::vector<TokenizedInstance>& instances);

// ---- instance file format ---------------------------------------------------

void write_instances_jsonl(const std::string& path, const std::vector<TokenizedInstance>& v);
std::vector<TokenizedInstance> read_instances_jsonl(const std::string& path);

// ---- pretrained embeddings --------------------------------------------------

struct EmbeddingTable {
  Tensor matrix;  // [|V| x D]
  int dim = 0;
  long hits = 0;
  long misses = 0;
};

// text format: token then D reals per line; misses drawn uniform [-0.1, 0.1]
EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab, int dim,
                               std::uint64_t seed);

// fully random table with the same PAD-row convention
EmbeddingTable random_embeddings(const Vocab& vocab, int dim, std::uint64_t seed);

// ---- template impl ----------------------------------------------------------

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_dev(std::vector<T> records, double ratio,
                                                          std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split_train_dev: ratio must be in (0, 1)");
  }
  Rng rng(seed);
  rng.shuffle(records);
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(records.size())));
  std::vector<T> train(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<T> dev(records.begin() + static_cast<std::ptrdiff_t>(n_train), records.end());
  return {std::move(train), std::move(dev)};
}

}  // namespace hiergen
