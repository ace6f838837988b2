#include "hiergen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hiergen {

namespace {

std::vector<int> strip_markers(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int t : tokens) {
    if (t != Vocab::kBos && t != Vocab::kEos) out.push_back(t);
  }
  return out;
}

// score desc, then lexicographically smaller token sequence
bool better(const Hypothesis& a, const Hypothesis& b, double length_norm) {
  const double sa = a.score(length_norm), sb = b.score(length_norm);
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

bool better_raw(const Hypothesis& a, const Hypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

}  // namespace

std::vector<int> greedy_decode(DecodeSession& session, int max_len) {
  std::vector<int> prefix{Vocab::kBos};
  for (int step = 0; step < max_len; ++step) {
    const std::vector<double> lp = session.next_logprobs(prefix);
    int best = -1;
    for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
      if (tok == Vocab::kPad || tok == Vocab::kBos) continue;
      if (best < 0 || lp[static_cast<std::size_t>(tok)] > lp[static_cast<std::size_t>(best)]) {
        best = tok;
      }
    }
    if (best == Vocab::kEos) break;
    prefix.push_back(best);
  }
  return strip_markers(prefix);
}

std::vector<int> greedy_decode(Model& model, const QGInstance& instance, int max_len) {
  auto session = model.begin_decode(instance);
  return greedy_decode(*session, max_len);
}

Hypothesis beam_decode_best(DecodeSession& session, int beam, int max_len, double length_norm) {
  if (beam < 1) throw std::invalid_argument("beam_decode: beam width must be >= 1");
  std::vector<Hypothesis> live{{std::vector<int>{Vocab::kBos}, 0.0, false}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& h : live) {
      const std::vector<double> lp = session.next_logprobs(h.tokens);
      for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
        if (tok == Vocab::kPad || tok == Vocab::kBos) continue;
        Hypothesis next;
        next.tokens = h.tokens;
        next.tokens.push_back(tok);
        next.logprob = h.logprob + lp[static_cast<std::size_t>(tok)];
        next.finished = tok == Vocab::kEos;
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better_raw);
    if (static_cast<int>(candidates.size()) > beam) {
      candidates.resize(static_cast<std::size_t>(beam));
    }
    live.clear();
    for (Hypothesis& h : candidates) {
      if (h.finished) {
        finished.push_back(std::move(h));
      } else {
        live.push_back(std::move(h));
      }
    }
  }
  for (Hypothesis& h : live) {
    h.finished = true;  // ran into max_len
    finished.push_back(std::move(h));
  }

  Hypothesis best = finished.front();
  for (const Hypothesis& h : finished) {
    if (better(h, best, length_norm)) best = h;
  }
  return best;
}

std::vector<int> beam_decode(DecodeSession& session, int beam, int max_len, double length_norm) {
  return strip_markers(beam_decode_best(session, beam, max_len, length_norm).tokens);
}

std::vector<int> beam_decode(Model& model, const QGInstance& instance, int beam, int max_len,
                             double length_norm) {
  auto session = model.begin_decode(instance);
  return beam_decode(*session, beam, max_len, length_norm);
}

}  // namespace hiergen
