#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace vimu {

// splitmix64 finalizer; used to turn seeds and names into well-mixed state.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over the bytes of a substream name.
inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic random stream with named substreams. A substream is fully
// determined by (origin seed, name, index), never by how much the parent has
// consumed, so adding draws in one component cannot shift another. Gaussians
// come from our own Box-Muller on top of mt19937_64; the standard library's
// normal_distribution is implementation-defined and would break cross-build
// reproducibility.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(mix64(seed)) {}

  RngStream substream(std::string_view name, std::uint64_t index = 0) const {
    return RngStream(mix64(seed_ ^ hash_name(name) ^ mix64(index ^ 0x51e6d5ull)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vimu
