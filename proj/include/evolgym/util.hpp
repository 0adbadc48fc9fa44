#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace evolgym::util {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = kFnvOffset) {
  std::uint64_t hash = seed;
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= kFnvPrime;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d4a08685e39a35ull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t mix(std::uint64_t a, std::string_view b) { return mix(a, fnv1a64(b)); }

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

/// Uniform double in [0,1) drawn portably from the generator's raw output.
inline double next_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) without std::uniform_int_distribution, whose
/// algorithm is implementation-defined.
inline std::uint64_t next_below(std::mt19937_64& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>(next_unit(rng) * static_cast<double>(bound)) % bound;
}

template <typename T>
void seeded_shuffle(std::vector<T>& values, std::mt19937_64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[next_below(rng, i)]);
  }
}

std::string trim(std::string_view text);
std::string lower(std::string_view text);
/// Lowercases, trims, and collapses internal whitespace runs to single spaces.
std::string normalize_ws(std::string_view text);
/// Lowercase alphanumeric tokens; runs of adjacent numeric tokens are fused
/// into one token joined by '_' so coordinate pairs stay intact.
std::vector<std::string> tokenize(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

}  // namespace evolgym::util
