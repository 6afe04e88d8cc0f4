#include "stpp/rng.hpp"

#include <cmath>
#include <numbers>

namespace stpp {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t make_key(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + kGolden) ^ mix64(stream * 0xD1B54A32D192ED03ULL + 0x2545F4914F6CDD1DULL));
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(make_key(seed, stream)) {}

Rng Rng::split(std::uint64_t stream) const {
  // Children of children stay distinct from first-level streams.
  return Rng(mix64(key_ ^ 0x6A09E667F3BCC909ULL), stream);
}

Rng Rng::stream(std::string_view name) const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return split(h);
}

Rng::result_type Rng::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec2 Rng::normal2(const Vec2& mean, const Mat2& cov) {
  const Eigen::LLT<Mat2> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("normal2: covariance is not positive definite");
  const double z0 = normal();
  const double z1 = normal();
  return mean + llt.matrixL() * Vec2(z0, z1);
}

std::size_t Rng::index(std::size_t n) {
  auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

}  // namespace stpp
