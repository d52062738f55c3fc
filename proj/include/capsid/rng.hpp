#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace capsid {

// SplitMix64 generator. All randomness in the project flows from one
// 64-bit seed through named sub-streams, so runs are reproducible across
// platforms without depending on libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). Rejection-free modulo bias is irrelevant at
  // our n (<< 2^32), but use Lemire-style reduction anyway.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Caches the second variate.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    // Avoid log(0).
    while (u1 <= 0.0) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over the stream name, mixed into the base seed. Distinct names
// (split, init, shuffle, noise, ...) give independent reproducible streams.
inline uint64_t sub_seed(uint64_t base, std::string_view stream) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  Rng mixer(base ^ h);
  return mixer.next_u64();
}

inline uint64_t sub_seed(uint64_t base, std::string_view stream, uint64_t index) {
  Rng mixer(sub_seed(base, stream) + 0x9e3779b97f4a7c15ull * (index + 1));
  return mixer.next_u64();
}

}  // namespace capsid
