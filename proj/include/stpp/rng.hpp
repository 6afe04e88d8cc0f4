#ifndef STPP_RNG_HPP
#define STPP_RNG_HPP

#include "stpp/core.hpp"

#include <cstdint>
#include <limits>
#include <string_view>

namespace stpp {

// Counter-based generator: draw i of stream (seed, id) is a SplitMix64
// finalizer applied to key(seed, id) + i * golden. Streams are independent,
// can be derived in any order and never share state, so per-sequence
// simulation is reproducible regardless of scheduling.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  // Child stream; the parent's counter does not move.
  Rng split(std::uint64_t stream) const;
  // Child stream keyed by a name (FNV-1a hash), e.g. "sim", "latent".
  Rng stream(std::string_view name) const;

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Exponential with the given rate (mean 1 / rate).
  double exponential(double rate);
  double normal();
  // Draw from N(mean, cov); cov must be SPD.
  Vec2 normal2(const Vec2& mean, const Mat2& cov);
  // Index in [0, n).
  std::size_t index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace stpp

#endif  // STPP_RNG_HPP
