#include "rfdeep/rng.hpp"

#include <cmath>
#include <numbers>

namespace rfdeep {

double SplitMix64::normal() {
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ mix64(index + 0x9E3779B97F4A7C15ULL);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view role,
                          std::uint64_t index) {
  return derive_seed(seed ^ mix64(fnv1a64(role)), index);
}

}  // namespace rfdeep
