#include "hiergen/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hiergen {

using nlohmann::json;

// ---- vocabulary -----------------------------------------------------------

Vocab::Vocab() {
  id_to_token_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
  for (int i = 0; i < 4; ++i) token_to_id_[id_to_token_[static_cast<std::size_t>(i)]] = i;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::invalid_argument("vocab: id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(size()) + ")");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int new_id = size();
  token_to_id_[token] = new_id;
  id_to_token_.push_back(token);
  return new_id;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot write " + path);
  for (const auto& t : id_to_token_) f << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot read " + path);
  Vocab v;
  std::string line;
  int idx = 0;
  while (std::getline(f, line)) {
    if (idx < 4) {
      if (line != v.id_to_token_[static_cast<std::size_t>(idx)]) {
        throw std::runtime_error("vocab: " + path + " is missing reserved entry " +
                                 v.id_to_token_[static_cast<std::size_t>(idx)]);
      }
    } else {
      v.add(line);
    }
    ++idx;
  }
  return v;
}

Vocab build_vocab(const std::map<std::string, long long>& freq, int max_size, int min_freq) {
  std::vector<std::pair<std::string, long long>> items;
  for (const auto& [tok, n] : freq) {
    if (n >= min_freq) items.emplace_back(tok, n);
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, n] : items) {
    (void)n;
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

// ---- bio ------------------------------------------------------------------

char bio_char(Bio b) { return b == Bio::B ? 'B' : (b == Bio::I ? 'I' : 'O'); }

Bio bio_from_char(char c) {
  switch (c) {
    case 'B': return Bio::B;
    case 'I': return Bio::I;
    case 'O': return Bio::O;
    default: throw std::invalid_argument(std::string("bad BIO tag '") + c + "'");
  }
}

std::vector<Bio> bio_tag(const std::vector<std::string>& tokens,
                         const std::vector<std::string>& answer_tokens) {
  std::vector<Bio> tags(tokens.size(), Bio::O);
  if (answer_tokens.empty() || answer_tokens.size() > tokens.size()) return tags;
  for (std::size_t start = 0; start + answer_tokens.size() <= tokens.size(); ++start) {
    bool match = true;
    for (std::size_t j = 0; j < answer_tokens.size() && match; ++j) {
      match = tokens[start + j] == answer_tokens[j];
    }
    if (match) {
      tags[start] = Bio::B;
      for (std::size_t j = 1; j < answer_tokens.size(); ++j) tags[start + j] = Bio::I;
      break;  // leftmost occurrence only
    }
  }
  return tags;
}

// ---- sentence splitting -----------------------------------------------------

namespace {

const std::set<std::string>& abbreviation_stoplist() {
  static const std::set<std::string> stop{"mr.", "mrs.", "ms.", "dr.", "prof.", "st.",
                                          "u.s.", "e.g.", "i.e.", "etc.", "vs.", "no."};
  return stop;
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

std::string word_ending_at(const std::string& text, std::size_t i) {
  std::size_t start = i;
  while (start > 0 && !std::isspace(static_cast<unsigned char>(text[start - 1]))) --start;
  std::string w = text.substr(start, i - start + 1);
  for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return w;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> sentence_split_spans(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (text.empty()) throw std::invalid_argument("sentence_split: empty text");
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_terminator(text[i])) continue;
    std::size_t j = i + 1;
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i + 1 || j == text.size()) continue;  // needs whitespace then more text
    const unsigned char next = static_cast<unsigned char>(text[j]);
    if (!std::isupper(next) && !std::isdigit(next)) continue;
    if (text[i] == '.' && abbreviation_stoplist().count(word_ending_at(text, i)) > 0) continue;
    spans.emplace_back(start, i + 1);
    start = i + 1;
  }
  spans.emplace_back(start, text.size());
  return spans;
}

std::vector<std::string> sentence_split(const std::string& text) {
  std::vector<std::string> out;
  for (auto [b, e] : sentence_split_spans(text)) {
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    if (e > b) out.push_back(text.substr(b, e - b));
  }
  if (out.empty()) out.push_back("");
  return out;
}

// ---- tokenizer --------------------------------------------------------------

namespace {

bool is_detached_punct(char c) {
  static const std::string puncts = ".,!?;:\"'()";
  return puncts.find(c) != std::string::npos;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_detached_punct(c)) {
      flush();
      tokens.push_back(std::string(1, c));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return tokens;
}

// ---- loaders ----------------------------------------------------------------

namespace {

json parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("failed to parse " + path + " at byte " + std::to_string(e.byte) +
                             ": " + e.what());
  }
}

}  // namespace

std::vector<RawRecord> load_squad(const std::string& path) {
  const json root = parse_file(path);
  if (!root.contains("data") || !root["data"].is_array()) {
    throw std::runtime_error(path + ": expected top-level \"data\" array");
  }
  std::vector<RawRecord> records;
  for (const auto& article : root["data"]) {
    if (!article.contains("paragraphs")) {
      throw std::runtime_error(path + ": article is missing \"paragraphs\"");
    }
    for (const auto& para : article["paragraphs"]) {
      if (!para.contains("context") || !para.contains("qas")) {
        throw std::runtime_error(path + ": paragraph is missing \"context\" or \"qas\"");
      }
      const std::string context = para["context"].get<std::string>();
      for (const auto& qa : para["qas"]) {
        RawRecord r;
        r.paragraph = context;
        r.question = qa.at("question").get<std::string>();
        if (qa.contains("answers") && !qa["answers"].empty()) {
          r.answer = qa["answers"][0].at("text").get<std::string>();
          r.answer_char_offset = qa["answers"][0].value("answer_start", -1L);
        }
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

std::vector<RawRecord> load_marco(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<RawRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("failed to parse " + path + ":" + std::to_string(line_no) +
                               " at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!rec.contains("passages") || !rec.contains("query") || !rec.contains("answers")) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": missing required field (passages/query/answers)");
    }
    std::string selected;
    for (const auto& p : rec["passages"]) {
      if (p.value("is_selected", 0) != 0) {
        selected = p.at("passage_text").get<std::string>();
        break;
      }
    }
    if (selected.empty()) continue;  // not answerable from any paragraph
    RawRecord r;
    r.paragraph = std::move(selected);
    r.question = rec["query"].get<std::string>();
    if (!rec["answers"].empty()) r.answer = rec["answers"][0].get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

// ---- instance building --------------------------------------------------------

TokenizedInstance preprocess_record(const RawRecord& record, const std::string& id,
                                    const Limits& limits) {
  TokenizedInstance inst;
  inst.id = id;
  for (const std::string& s : sentence_split(record.paragraph)) {
    if (static_cast<int>(inst.sentences.size()) >= limits.max_sentences) break;
    std::vector<std::string> toks = tokenize(s);
    if (toks.empty()) continue;
    if (static_cast<int>(toks.size()) > limits.max_sentence_tokens) {
      toks.resize(static_cast<std::size_t>(limits.max_sentence_tokens));
    }
    inst.sentences.push_back(std::move(toks));
  }
  if (inst.sentences.empty()) inst.sentences.push_back({});
  inst.question = tokenize(record.question);
  if (static_cast<int>(inst.question.size()) > limits.max_question_tokens) {
    inst.question.resize(static_cast<std::size_t>(limits.max_question_tokens));
  }
  inst.answer_tokens = tokenize(record.answer);

  // leftmost match across sentences in order
  inst.bio.reserve(inst.sentences.size());
  bool found = false;
  for (std::size_t i = 0; i < inst.sentences.size(); ++i) {
    if (found) {
      inst.bio.emplace_back(inst.sentences[i].size(), Bio::O);
      continue;
    }
    std::vector<Bio> tags = bio_tag(inst.sentences[i], inst.answer_tokens);
    for (std::size_t j = 0; j < tags.size(); ++j) {
      if (tags[j] == Bio::B) {
        found = true;
        inst.span = AnswerSpan{static_cast<int>(i), static_cast<int>(j),
                               static_cast<int>(j + inst.answer_tokens.size()) - 1};
        break;
      }
    }
    if (!found) std::fill(tags.begin(), tags.end(), Bio::O);
    inst.bio.push_back(std::move(tags));
  }
  inst.has_answer.reserve(inst.sentences.size());
  for (std::size_t i = 0; i < inst.sentences.size(); ++i) {
    inst.has_answer.push_back(inst.span && inst.span->sentence == static_cast<int>(i));
  }
  return inst;
}

int QGInstance::total_words() const {
  int n = 0;
  for (const auto& s : paragraph) n += static_cast<int>(s.size());
  return n;
}

void QGInstance::check_invariants() const {
  if (paragraph.size() != bio_tags.size() || paragraph.size() != sentence_has_answer.size()) {
    throw std::logic_error("instance " + id + ": per-sentence field counts disagree");
  }
  int b_count = 0;
  for (std::size_t i = 0; i < paragraph.size(); ++i) {
    const auto& sent = paragraph[i];
    if (sent.size() < 2 || sent.front() != Vocab::kBos || sent.back() != Vocab::kEos) {
      throw std::logic_error("instance " + id + ": sentence " + std::to_string(i) +
                             " is not BOS..EOS delimited");
    }
    if (sent.size() != bio_tags[i].size()) {
      throw std::logic_error("instance " + id + ": bio row " + std::to_string(i) +
                             " does not match sentence length");
    }
    bool in_run = false, run_seen = false, has_bi = false;
    for (std::size_t j = 0; j < bio_tags[i].size(); ++j) {
      const Bio t = bio_tags[i][j];
      if (t != Bio::O) has_bi = true;
      if (t == Bio::B) {
        ++b_count;
        if (run_seen) throw std::logic_error("instance " + id + ": multiple B tags");
        in_run = true;
        run_seen = true;
        if (!answer_span || answer_span->sentence != static_cast<int>(i) ||
            answer_span->start != static_cast<int>(j)) {
          throw std::logic_error("instance " + id + ": B tag does not match answer_span");
        }
      } else if (t == Bio::I) {
        if (!in_run) throw std::logic_error("instance " + id + ": I tag without preceding B");
      } else {
        if (in_run && answer_span && answer_span->sentence == static_cast<int>(i) &&
            answer_span->end != static_cast<int>(j) - 1) {
          throw std::logic_error("instance " + id + ": answer_span end does not match run");
        }
        in_run = false;
      }
    }
    if (sentence_has_answer[i] != has_bi) {
      throw std::logic_error("instance " + id + ": sentence_has_answer flag mismatch at " +
                             std::to_string(i));
    }
  }
  if (answer_span && b_count != 1) {
    throw std::logic_error("instance " + id + ": answer_span present but no single B..I run");
  }
  if (!answer_span && b_count != 0) {
    throw std::logic_error("instance " + id + ": B..I run present without answer_span");
  }
}

QGInstance encode_instance(const TokenizedInstance& inst, const Vocab& vocab) {
  QGInstance q;
  q.id = inst.id;
  q.paragraph_id = inst.paragraph_id;
  q.question = vocab.encode(inst.question);
  q.answer_tokens = vocab.encode(inst.answer_tokens);
  for (std::size_t i = 0; i < inst.sentences.size(); ++i) {
    std::vector<int> ids;
    ids.reserve(inst.sentences[i].size() + 2);
    ids.push_back(Vocab::kBos);
    for (int t : vocab.encode(inst.sentences[i])) ids.push_back(t);
    ids.push_back(Vocab::kEos);
    q.paragraph.push_back(std::move(ids));

    std::vector<Bio> tags;
    tags.reserve(inst.bio[i].size() + 2);
    tags.push_back(Bio::O);
    for (Bio b : inst.bio[i]) tags.push_back(b);
    tags.push_back(Bio::O);
    q.bio_tags.push_back(std::move(tags));
    q.sentence_has_answer.push_back(inst.has_answer[i]);
  }
  if (inst.span) {
    q.answer_span = AnswerSpan{inst.span->sentence, inst.span->start + 1, inst.span->end + 1};
  }
  q.check_invariants();
  return q;
}

std::map<std::string, long long> count_tokens(const std::vector<TokenizedInstance>& instances) {
  std::map<std::string, long long> freq;
  for (const auto& inst : instances) {
    for (const auto& s : inst.sentences) {
      for (const auto& t : s) ++freq[t];
    }
    for (const auto& t : inst.question) ++freq[t];
    for (const auto& t : inst.answer_tokens) ++freq[t];
  }
  return freq;
}

// ---- jsonl ------------------------------------------------------------------

void write_instances_jsonl(const std::string& path, const std::vector<TokenizedInstance>& v) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& inst : v) {
    json j;
    j["id"] = inst.id;
    j["paragraph_id"] = inst.paragraph_id;
    j["sentences"] = inst.sentences;
    j["question"] = inst.question;
    j["answer"] = inst.answer_tokens;
    json bio = json::array();
    for (const auto& rowtags : inst.bio) {
      std::string s;
      for (Bio b : rowtags) s.push_back(bio_char(b));
      bio.push_back(s);
    }
    j["bio"] = bio;
    j["has_answer"] = inst.has_answer;
    if (inst.span) {
      j["span"] = {inst.span->sentence, inst.span->start, inst.span->end};
    } else {
      j["span"] = nullptr;
    }
    f << j.dump() << "\n";
  }
}

std::vector<TokenizedInstance> read_instances_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<TokenizedInstance> out;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("failed to parse " + path + ":" + std::to_string(line_no) +
                               " at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    TokenizedInstance inst;
    inst.id = j.value("id", std::to_string(line_no));
    inst.paragraph_id = j.value("paragraph_id", std::string{});
    inst.sentences = j.at("sentences").get<std::vector<std::vector<std::string>>>();
    inst.question = j.at("question").get<std::vector<std::string>>();
    inst.answer_tokens = j.value("answer", std::vector<std::string>{});
    for (const auto& rowtags : j.at("bio")) {
      std::vector<Bio> tags;
      for (char c : rowtags.get<std::string>()) tags.push_back(bio_from_char(c));
      inst.bio.push_back(std::move(tags));
    }
    inst.has_answer = j.at("has_answer").get<std::vector<bool>>();
    if (j.contains("span") && !j["span"].is_null()) {
      inst.span = AnswerSpan{j["span"][0].get<int>(), j["span"][1].get<int>(),
                             j["span"][2].get<int>()};
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// ---- embeddings ---------------------------------------------------------------

EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab, int dim,
                               std::uint64_t seed) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  EmbeddingTable table = random_embeddings(vocab, dim, seed);
  table.hits = 0;
  std::vector<bool> seen(static_cast<std::size_t>(vocab.size()), false);
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> values;
    double x;
    while (is >> x) values.push_back(x);
    if (static_cast<int>(values.size()) != dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " values, got " +
                               std::to_string(values.size()));
    }
    if (!vocab.contains(token)) continue;
    const int id = vocab.id(token);
    if (id == Vocab::kPad) continue;
    std::copy(values.begin(), values.end(),
              table.matrix.data().begin() + static_cast<std::size_t>(id) * dim);
    if (!seen[static_cast<std::size_t>(id)]) {
      seen[static_cast<std::size_t>(id)] = true;
      ++table.hits;
    }
  }
  table.misses = vocab.size() - table.hits;
  return table;
}

EmbeddingTable random_embeddings(const Vocab& vocab, int dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingTable table;
  table.dim = dim;
  table.matrix = Tensor::uniform({vocab.size(), dim}, -0.1, 0.1, rng, true);
  // PAD row stays zero
  std::fill(table.matrix.data().begin(), table.matrix.data().begin() + dim, 0.0);
  table.hits = 0;
  table.misses = vocab.size();
  return table;
}

}  // namespace hiergen
