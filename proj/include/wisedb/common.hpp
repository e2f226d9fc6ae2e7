#ifndef WISEDB_COMMON_HPP
#define WISEDB_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wisedb {

// Canonical units everywhere: seconds and dollars. Rates are dollars per
// second; anything expressed per hour is converted once at config load.
using Seconds = double;
using Money = double;

// Sentinel for "placement impossible here" feature costs. Decision trees
// treat it as an ordinary numeric value.
inline constexpr Money kInfiniteCost = 1e18;

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

class ResourceCapError : public std::runtime_error {
 public:
  explicit ResourceCapError(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::uint64_t value, std::uint64_t h) {
  return fnv1a64(&value, sizeof(value), h);
}

// splitmix64; used to derive independent deterministic sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace wisedb

#endif  // WISEDB_COMMON_HPP
