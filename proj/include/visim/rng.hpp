#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace visim {

/// Deterministic random stream. Identical (seed, algorithm) gives a
/// bit-exact identical sequence on every platform: the generator core is
/// xoshiro256++ seeded through splitmix64, and all variate transforms
/// (uniform doubles, Box-Muller normals) are implemented here rather than
/// delegated to the standard library's unspecified distributions.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  static constexpr std::string_view kAlgorithmId = "xoshiro256++";

  std::uint64_t seed() const { return seed_; }
  std::string_view algorithm_id() const { return kAlgorithmId; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller (second variate cached in the state).
  double normal();

  /// Derive an independent child stream. split is a pure function of
  /// (seed, stream_id), so concurrent consumers can each own stream i.
  SeededRng split(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace visim
