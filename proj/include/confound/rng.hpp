#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace confound {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent child seed from a root seed and a path of tags
/// (e.g. {purpose, day, chunk}).
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = root;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t tag : path) {
    state ^= tag + 0x632be59bd9b4e019ULL + (out << 6) + (out >> 2);
    out = splitmix64(state);
  }
  return out;
}

/// Cumulative table for Stream::from_cdf. Entries from the last positive
/// probability onward are pinned to exactly 1 so zero-mass tails are never drawn.
inline std::vector<double> make_cdf(std::span<const double> probs) {
  std::vector<double> cdf(probs.size());
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    cdf[i] = cum;
    if (probs[i] > 0.0) last_positive = i;
  }
  for (std::size_t i = last_positive; i < cdf.size(); ++i) cdf[i] = 1.0;
  return cdf;
}

/// Seeded pseudo-random stream.
///
/// Only the raw 64-bit output of mt19937_64 is used; every conversion to a
/// variate is done here so sequences are identical across standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential() { return -std::log1p(-uniform()); }

  /// Inverse-CDF draw from a probability vector.
  /// Falls back to the last positive entry when rounding leaves u above the total.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      cum += probs[i];
      last_positive = i;
      if (u < cum) return i;
    }
    return last_positive;
  }

  /// Index into a table built by make_cdf.
  std::size_t from_cdf(std::span<const double> cdf) {
    const double u = uniform();
    std::size_t i = 0;
    while (i + 1 < cdf.size() && !(u < cdf[i])) ++i;
    return i;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace confound
