#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace narrshift {

/// Pinned pseudo-random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distributions below are written out by hand because the
/// standard library distributions are implementation-defined, and every
/// sampled quantity in the pipeline must replay identically across
/// platforms.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) from the top 53 bits of one draw.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) via one 64x64->128 multiply (one draw).
  std::uint32_t below(std::uint32_t n) {
    const unsigned __int128 wide = static_cast<unsigned __int128>(next()) * n;
    return static_cast<std::uint32_t>(wide >> 64);
  }

  /// Index drawn proportionally to non-negative `weights` (one draw).
  /// Returns the first index whose running sum exceeds u * total.
  std::size_t categorical(std::span<const double> weights, double total) {
    const double target = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return i;
    }
    // Rounding can leave target == acc at the end; take the last positive bin.
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return 0;
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named sub-stream keyed by up to two indices, e.g.
/// (master, kBootstrapStream, topic, chunk).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = mix_seed(master ^ mix_seed(stream));
  s = mix_seed(s ^ (a + 0x632be59bd9b4e019ULL));
  return mix_seed(s ^ (b + 0x8cb92ba72f3d8dd7ULL));
}

inline constexpr std::uint64_t kRollStream = 0x526f6c6c;       // "Roll"
inline constexpr std::uint64_t kBootstrapStream = 0x426f6f74;  // "Boot"
inline constexpr std::uint64_t kDetectStream = 0x44657465;     // "Dete"

/// Walker/Vose alias table: O(1) categorical draws, two uniforms' worth of
/// bits taken from a single 64-bit draw.
class AliasTable {
 public:
  explicit AliasTable(std::span<const double> weights);

  std::size_t size() const { return prob_.size(); }

  std::size_t sample(Rng& rng) const {
    const std::uint64_t bits = rng.next();
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(bits) * prob_.size();
    const auto column = static_cast<std::size_t>(wide >> 64);
    // Low half of the product: the fractional position inside the column.
    const double u =
        static_cast<double>(static_cast<std::uint64_t>(wide) >> 11) * 0x1.0p-53;
    return u < prob_[column] ? column : alias_[column];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

}  // namespace narrshift
