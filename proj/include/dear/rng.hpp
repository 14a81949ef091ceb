#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dear {

// Seeded generator whose draws depend only on the seed and call sequence.
// Distributions are implemented here rather than via <random> adaptors so
// that the serialised engine state is the whole state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::string serialize() const;
  void deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a tag (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace dear
