#pragma once

// Deterministic, splittable random streams. Every consumer derives its own
// stream from (seed, tag, index...), so results do not depend on execution
// order or thread count. The generator is xoshiro256++ seeded via splitmix64;
// uniform/normal variates are generated here rather than with std::
// distributions so that sequences are pinned down exactly.

#include <array>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sparselts {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = detail::splitmix64(sm);
  }

  // Stream derivation: mixes the extra words into a fresh seed.
  Rng stream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t sm = state_[0] ^ detail::rotl(state_[1], 17);
    sm ^= 0x632be59bd9b4e019ULL + a;
    sm = detail::splitmix64(sm);
    sm ^= 0x9e6c63d0876a9a47ULL + b;
    sm = detail::splitmix64(sm);
    sm ^= 0xc2b2ae3d27d4eb4fULL + c;
    return Rng(detail::splitmix64(sm));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the spare variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925287;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<int> sample_distinct(int n, int k) {
    if (k > n) throw std::invalid_argument("sample_distinct: k > n");
    std::vector<int> out;
    out.reserve(k);
    while (static_cast<int>(out.size()) < k) {
      const int candidate = static_cast<int>(uniform_int(static_cast<std::uint64_t>(n)));
      bool seen = false;
      for (int v : out) {
        if (v == candidate) {
          seen = true;
          break;
        }
      }
      if (!seen) out.push_back(candidate);
    }
    return out;
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sparselts
