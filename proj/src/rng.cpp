#include "dear/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dear/errors.hpp"

namespace dear {

double Rng::normal() {
  // Box-Muller; the second variate is discarded to keep the state stateless
  // beyond the engine.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw FormatError("rng: malformed engine state");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dear
