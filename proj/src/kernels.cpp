#include "stpp/kernels.hpp"

#include "stpp/quadrature.hpp"

#include <cmath>

namespace stpp {
namespace {

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

}  // namespace

double gauss2_mass(const Gauss2<double>& g, const SpatialRegion& region, double tol) {
  if (!region.bounded()) return 1.0;
  const Vec2& lo = region.lo();
  const Vec2& hi = region.hi();
  if (g.diagonal()) {
    double mass = 1.0;
    for (int d = 0; d < 2; ++d) {
      const double sd = std::sqrt(g.cov()(d, d));
      mass *= normal_cdf(hi[d], g.mean()[d], sd) - normal_cdf(lo[d], g.mean()[d], sd);
    }
    return mass;
  }
  auto f = [&](double x, double y) { return g.pdf(Vec2(x, y)); };
  return quad::integrate_2d(f, lo, hi, {.abs_tol = tol}, {g.mean().x()}, {g.mean().y()}).value;
}

double gauss2_truncated_pdf(const Gauss2<double>& g, const Vec2& s, const SpatialRegion& region) {
  if (!region.bounded()) throw ValidationError("gauss2_truncated_pdf requires a rectangular region");
  if (!region.contains(s)) return 0.0;
  return g.pdf(s) / gauss2_mass(g, region);
}

TruncatedGauss2::TruncatedGauss2(Gauss2<double> g, SpatialRegion region)
    : g_(std::move(g)), region_(std::move(region)), mass_(gauss2_mass(g_, region_)) {
  if (!region_.bounded()) throw ValidationError("TruncatedGauss2 requires a rectangular region");
  if (!(mass_ > 0.0)) throw NumericError("TruncatedGauss2: zero mass inside region");
}

}  // namespace stpp
