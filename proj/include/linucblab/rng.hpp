#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace linucblab {

// Deterministic PRNG with explicit double conversion. The standard <random>
// distributions are implementation-defined, so every draw here is spelled out
// to keep runs byte-reproducible across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { seed_state(seed); }

  // Independent substream (seed, stream): used to give the environment, the
  // agent and each parallel job their own deterministic streams.
  Rng(std::uint64_t seed, std::uint64_t stream) {
    seed_state(splitmix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

  std::uint64_t next_u64() {
    // xoshiro256**
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    return static_cast<int>(next_double() * static_cast<double>(n)) % n;
  }

  // -1 or +1
  int sign() { return (next_u64() & 1ULL) ? 1 : -1; }

  // standard normal, Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    return splitmix(seed ^ splitmix(index + 0x632be59bd9b4e019ULL));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  void seed_state(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) {
      x = splitmix(x);
      s = x;
    }
    have_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t s_[4] = {};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace linucblab
