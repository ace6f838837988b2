#include "hiergen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace hiergen {

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

// n-grams joined with an unlikely separator, mapped to counts
std::unordered_map<std::string, int> ngram_counts(const TokenSeq& tokens, int order) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < order) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < order; ++j) {
      if (j) key.push_back('\x1f');
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

void check_corpus(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  if (hyps.empty()) throw std::invalid_argument("metric: empty corpus");
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("metric: corpus sizes differ, " + std::to_string(hyps.size()) +
                                " hypotheses vs " + std::to_string(refs.size()) + " references");
  }
}

}  // namespace

double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
            int max_order, double* brevity_penalty_out) {
  check_corpus(hypotheses, references);
  if (max_order < 1) throw std::invalid_argument("bleu: max_order must be >= 1");

  long long hyp_len = 0, ref_len = 0;
  for (const auto& h : hypotheses) hyp_len += static_cast<long long>(h.size());
  for (const auto& r : references) ref_len += static_cast<long long>(r.size());

  double log_precision_sum = 0.0;
  for (int order = 1; order <= max_order; ++order) {
    long long matches = 0, candidates = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
      auto hyp_counts = ngram_counts(hypotheses[i], order);
      auto ref_counts = ngram_counts(references[i], order);
      for (const auto& [gram, count] : hyp_counts) {
        candidates += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches += std::min(count, it->second);
      }
    }
    double p;
    if (candidates == 0) {
      p = 1.0;  // no n-grams of this order exist; neutral
    } else if (matches == 0) {
      p = 1.0 / static_cast<double>(candidates + 1);  // add-one smoothing
    } else {
      p = static_cast<double>(matches) / static_cast<double>(candidates);
    }
    log_precision_sum += std::log(p);
  }

  double bp;
  if (hyp_len == 0) {
    bp = 0.0;
  } else if (hyp_len >= ref_len) {
    bp = 1.0;
  } else {
    bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  }
  if (brevity_penalty_out) *brevity_penalty_out = bp;
  return bp * std::exp(log_precision_sum / max_order);
}

double rouge_l(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
               double beta2) {
  check_corpus(hypotheses, references);
  double total = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& h = hypotheses[i];
    const auto& r = references[i];
    if (h.empty() || r.empty()) continue;  // scores 0
    const int lcs = lcs_length(h, r);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(h.size());
    const double rec = static_cast<double>(lcs) / static_cast<double>(r.size());
    total += (1.0 + beta2) * rec * p / (rec + beta2 * p);
  }
  return total / static_cast<double>(hypotheses.size());
}

EvalReport evaluate_corpus(const std::vector<TokenSeq>& hypotheses,
                           const std::vector<TokenSeq>& references, double beta2) {
  EvalReport rep;
  rep.n_instances = static_cast<int>(hypotheses.size());
  rep.bleu1 = bleu(hypotheses, references, 1);
  rep.bleu2 = bleu(hypotheses, references, 2);
  rep.bleu3 = bleu(hypotheses, references, 3);
  rep.bleu4 = bleu(hypotheses, references, 4, &rep.brevity_penalty);
  rep.rouge_l = rouge_l(hypotheses, references, beta2);
  return rep;
}

std::string eval_report_json(const EvalReport& report, const std::string& config_hash,
                             std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["bleu1"] = report.bleu1;
  j["bleu2"] = report.bleu2;
  j["bleu3"] = report.bleu3;
  j["bleu4"] = report.bleu4;
  j["rouge_l"] = report.rouge_l;
  j["n_instances"] = report.n_instances;
  j["brevity_penalty"] = report.brevity_penalty;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  return j.dump(2);
}

}  // namespace hiergen
