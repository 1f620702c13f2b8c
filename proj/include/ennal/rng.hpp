#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace ennal {

/// 64-bit FNV-1a over arbitrary bytes; the basis for seed derivation.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t h, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  return fnv1a64(std::string_view(buf, 8), h);
}

/// Derives an independent stream seed from a base seed and a tag.
/// Distinct tags give unrelated streams, so e.g. varying how many inputs
/// are drawn never perturbs the weight stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return fnv1a64(tag, mix_seed(0xcbf29ce484222325ull, base));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t salt) {
  return mix_seed(derive_seed(base, tag), salt);
}

/// Deterministic random stream: mt19937_64 with fully specified
/// distributions so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(bits() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; caches the spare deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n); unbiased via masked rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t mask = ~0ull >> std::countl_zero(n | 1);
    std::uint64_t v = bits() & mask;
    while (v >= n) v = bits() & mask;
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

/// k distinct indices drawn uniformly from {0..n-1} (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t k,
                                                           Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace ennal
