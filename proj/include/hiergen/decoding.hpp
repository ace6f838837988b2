#pragma once

#include <vector>

#include "hiergen/model.hpp"

namespace hiergen {

struct Hypothesis {
  std::vector<int> tokens;  // starts with BOS; EOS terminal when finished that way
  double logprob = 0.0;
  bool finished = false;

  // generated length: tokens after BOS, at least 1
  int length() const { return std::max(1, static_cast<int>(tokens.size()) - 1); }
  double score(double length_norm) const {
    return logprob / std::pow(static_cast<double>(length()), length_norm);
  }
};

// argmax next token until EOS or max_len; returns generated ids, BOS/EOS stripped
std::vector<int> greedy_decode(DecodeSession& session, int max_len);
std::vector<int> greedy_decode(Model& model, const QGInstance& instance, int max_len);

// beam search, score = logP / len^length_norm; ties broken toward the
// lexicographically smaller token sequence (lower ids, earlier finish)
std::vector<int> beam_decode(DecodeSession& session, int beam, int max_len, double length_norm);
std::vector<int> beam_decode(Model& model, const QGInstance& instance, int beam, int max_len,
                             double length_norm);

// best finished hypothesis, kept for score inspection in tests/tools
Hypothesis beam_decode_best(DecodeSession& session, int beam, int max_len, double length_norm);

}  // namespace hiergen
