#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hiergen {

using TokenSeq = std::vector<std::string>;

int lcs_length(const TokenSeq& a, const TokenSeq& b);

// Corpus-level BLEU: modified n-gram precision with clipped counts, geometric
// mean over orders 1..max_order (uniform weights), times the brevity penalty.
// Orders with zero matches get add-one smoothing; orders with no candidate
// n-grams at all count as neutral (precision 1).
double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
            int max_order, double* brevity_penalty_out = nullptr);

// LCS F-measure per instance, averaged over the corpus. beta2 weights recall.
double rouge_l(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
               double beta2 = 1.2);

struct EvalReport {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge_l = 0;
  int n_instances = 0;
  double brevity_penalty = 0;
};

EvalReport evaluate_corpus(const std::vector<TokenSeq>& hypotheses,
                           const std::vector<TokenSeq>& references, double beta2 = 1.2);

// JSON text of the report plus reproducibility fields
std::string eval_report_json(const EvalReport& report, const std::string& config_hash,
                             std::uint64_t seed);

}  // namespace hiergen
