#include "hiergen/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hiergen {

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::Seq2SeqAttAE: return "Seq2SeqAttAE";
    case Arch::HierSeq2SeqAE: return "HierSeq2SeqAE";
    case Arch::TransSeq2SeqAE: return "TransSeq2SeqAE";
    case Arch::HierTransSeq2SeqAE: return "HierTransSeq2SeqAE";
  }
  return "?";
}

Arch arch_from_name(const std::string& name) {
  if (name == "Seq2SeqAttAE") return Arch::Seq2SeqAttAE;
  if (name == "HierSeq2SeqAE") return Arch::HierSeq2SeqAE;
  if (name == "TransSeq2SeqAE") return Arch::TransSeq2SeqAE;
  if (name == "HierTransSeq2SeqAE") return Arch::HierTransSeq2SeqAE;
  throw std::invalid_argument(
      "unknown architecture '" + name +
      "' (expected Seq2SeqAttAE, HierSeq2SeqAE, TransSeq2SeqAE or HierTransSeq2SeqAE)");
}

HattScale Config::hatt_scale_kind() const {
  if (hatt_scale == "sqrt_d") return HattScale::sqrt_d;
  if (hatt_scale == "d") return HattScale::d;
  throw std::invalid_argument("hatt_scale must be 'sqrt_d' or 'd', got '" + hatt_scale + "'");
}

namespace {

struct Field {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

template <typename T>
T parse_value(const std::string& s);

template <>
int parse_value<int>(const std::string& s) {
  std::size_t pos = 0;
  const int v = std::stoi(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters in integer '" + s + "'");
  return v;
}

template <>
double parse_value<double>(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters in number '" + s + "'");
  return v;
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters in integer '" + s + "'");
  return v;
}

template <>
bool parse_value<bool>(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

template <>
std::string parse_value<std::string>(const std::string& s) {
  return s;
}

std::string to_string_value(const std::string& v) { return v; }
std::string to_string_value(bool v) { return v ? "true" : "false"; }
std::string to_string_value(int v) { return std::to_string(v); }
std::string to_string_value(std::uint64_t v) { return std::to_string(v); }
std::string to_string_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
Field make_field(T Config::* member) {
  return {[member](const Config& c) { return to_string_value(c.*member); },
          [member](Config& c, const std::string& s) { c.*member = parse_value<T>(s); }};
}

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = {
      {"arch", make_field(&Config::arch)},
      {"vocab_size", make_field(&Config::vocab_size)},
      {"embed_dim", make_field(&Config::embed_dim)},
      {"hidden", make_field(&Config::hidden)},
      {"dec_hidden", make_field(&Config::dec_hidden)},
      {"attn_dim", make_field(&Config::attn_dim)},
      {"bio_dim", make_field(&Config::bio_dim)},
      {"flag_dim", make_field(&Config::flag_dim)},
      {"d_model", make_field(&Config::d_model)},
      {"heads", make_field(&Config::heads)},
      {"enc_layers", make_field(&Config::enc_layers)},
      {"dec_layers", make_field(&Config::dec_layers)},
      {"ffn_dim", make_field(&Config::ffn_dim)},
      {"hatt_scale", make_field(&Config::hatt_scale)},
      {"word_attention_per_sentence", make_field(&Config::word_attention_per_sentence)},
      {"transformer_answer_mode", make_field(&Config::transformer_answer_mode)},
      {"format", make_field(&Config::format)},
      {"max_sentences", make_field(&Config::max_sentences)},
      {"max_sentence_tokens", make_field(&Config::max_sentence_tokens)},
      {"max_question_tokens", make_field(&Config::max_question_tokens)},
      {"min_freq", make_field(&Config::min_freq)},
      {"split_ratio", make_field(&Config::split_ratio)},
      {"embeddings_path", make_field(&Config::embeddings_path)},
      {"lr", make_field(&Config::lr)},
      {"adam_beta1", make_field(&Config::adam_beta1)},
      {"adam_beta2", make_field(&Config::adam_beta2)},
      {"adam_eps", make_field(&Config::adam_eps)},
      {"clip_norm", make_field(&Config::clip_norm)},
      {"batch_size", make_field(&Config::batch_size)},
      {"epochs", make_field(&Config::epochs)},
      {"patience", make_field(&Config::patience)},
      {"beam", make_field(&Config::beam)},
      {"length_norm", make_field(&Config::length_norm)},
      {"max_decode_len", make_field(&Config::max_decode_len)},
      {"seed", make_field(&Config::seed)},
  };
  return table;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

void apply_override(Config& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("expected key=value, got '" + assignment + "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  auto it = field_table().find(key);
  if (it == field_table().end()) {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
  try {
    it->second.set(config, value);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    throw std::invalid_argument("bad value for '" + key + "': " + e.what());
  }
  // enumerated keys fail fast rather than at build time
  if (key == "arch") (void)config.architecture();
  if (key == "hatt_scale") (void)config.hatt_scale_kind();
}

Config parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file " + path);
  Config config;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    try {
      apply_override(config, stripped);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

std::string config_to_string(const Config& config) {
  std::ostringstream os;
  for (const auto& [key, field] : field_table()) {
    os << key << " = " << field.get(config) << "\n";
  }
  return os.str();
}

std::string config_hash(const Config& config) {
  const std::string s = config_to_string(config);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void validate(const Config& config) {
  (void)config.architecture();
  (void)config.hatt_scale_kind();
  if (config.transformer_answer_mode != "concat_project" &&
      config.transformer_answer_mode != "add") {
    throw std::invalid_argument("transformer_answer_mode must be 'concat_project' or 'add'");
  }
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw std::invalid_argument(std::string(name) + " must be positive, got " +
                                  std::to_string(v));
    }
  };
  positive(config.vocab_size, "vocab_size");
  positive(config.embed_dim, "embed_dim");
  positive(config.hidden, "hidden");
  positive(config.dec_hidden, "dec_hidden");
  positive(config.attn_dim, "attn_dim");
  positive(config.bio_dim, "bio_dim");
  positive(config.flag_dim, "flag_dim");
  positive(config.d_model, "d_model");
  positive(config.heads, "heads");
  positive(config.enc_layers, "enc_layers");
  positive(config.dec_layers, "dec_layers");
  positive(config.ffn_dim, "ffn_dim");
  positive(config.max_decode_len, "max_decode_len");
  positive(config.batch_size, "batch_size");
  check_head_divisibility(config.d_model, config.heads);
  if (config.ffn_dim < config.d_model) {
    throw std::invalid_argument("ffn_dim must be at least d_model");
  }
  if (!(config.split_ratio > 0.0 && config.split_ratio < 1.0)) {
    throw std::invalid_argument("split_ratio must be in (0, 1)");
  }
  if (config.beam < 1) throw std::invalid_argument("beam must be >= 1");
  if (config.format != "squad" && config.format != "marco") {
    throw std::invalid_argument("format must be 'squad' or 'marco'");
  }
}

}  // namespace hiergen
