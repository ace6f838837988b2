#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace hiergen {

// Deterministic RNG. std::mt19937_64 output is fixed by the standard; the
// uniform/randint mappings below are ours, so streams are reproducible
// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // in [0, 1)
  double next_double() {
    return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // in [0, n)
  std::size_t randint(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[randint(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace hiergen
