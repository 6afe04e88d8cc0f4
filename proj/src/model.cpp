#include "stpp/model.hpp"

#include "stpp/quadrature.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace stpp {
namespace {

struct TailIntegral {
  double value = 0.0;
  double survival_at_cutoff = 1.0;
};

// Integrates g over (t_n, inf) on geometrically growing panels until the
// survival function drops below tail_tol. Returns the integral and the
// survival at the cutoff.
TailIntegral integrate_tail(const TemporalModel& model, const std::function<double(double)>& g,
                            const PredictOptions& opts) {
  const double t_n = model.last_time();
  const double lam0 = model.temporal_intensity(t_n);
  const double gap = (lam0 > 0.0 && std::isfinite(lam0)) ? 1.0 / lam0 : 1.0;
  const double limit = t_n + opts.max_mean_gaps * gap;

  TailIntegral out;
  double a = t_n;
  double width = gap;
  while (true) {
    const double b = a + width;
    out.value += quad::integrate(g, a, b, {.abs_tol = opts.abs_tol}).value;
    const double survival = std::exp(-model.compensator(b));
    out.survival_at_cutoff = survival;
    if (!std::isfinite(out.value)) throw NumericError("next-event integral is not finite");
    if (survival < opts.tail_tol) return out;
    if (b >= limit) {
      if (opts.allow_defective) return out;
      std::ostringstream os;
      os << "survival " << survival << " still above tail tolerance " << opts.tail_tol << " after "
         << opts.max_mean_gaps << " mean gaps; next-event distribution does not converge";
      throw NumericError(os.str());
    }
    a = b;
    width *= 2.0;
  }
}

}  // namespace

double predict_next_time(const TemporalModel& model, const PredictOptions& opts) {
  const double t_n = model.last_time();
  auto density = [&](double t) {
    const double lam = model.temporal_intensity(t);
    return lam == 0.0 ? 0.0 : lam * std::exp(-model.compensator(t));
  };
  // E[t] = t_n + E[t - t_n]; integrating the offset keeps the integrand small.
  const TailIntegral r = integrate_tail(model, [&](double t) { return (t - t_n) * density(t); }, opts);
  const double mass = 1.0 - r.survival_at_cutoff;
  if (!(mass > 0.0)) throw NumericError("next-event distribution has zero mass");
  return t_n + r.value / mass;
}

Vec2 predict_next_location(const SpatioTemporalModel& model, const PredictOptions& opts) {
  Vec2 out;
  double survival = 1.0;
  for (int d = 0; d < 2; ++d) {
    const TailIntegral r = integrate_tail(
        model, [&](double t) { return model.spatial_moment(t)[d] * std::exp(-model.compensator(t)); }, opts);
    out[d] = r.value;
    survival = r.survival_at_cutoff;
  }
  const double mass = 1.0 - survival;
  if (!(mass > 0.0)) throw NumericError("next-event distribution has zero mass");
  return out / mass;
}

double next_event_mass(const TemporalModel& model, const PredictOptions& opts) {
  PredictOptions o = opts;
  o.allow_defective = true;
  auto density = [&](double t) {
    const double lam = model.temporal_intensity(t);
    return lam == 0.0 ? 0.0 : lam * std::exp(-model.compensator(t));
  };
  return integrate_tail(model, density, o).value;
}

PoissonModel::PoissonModel(double rate, SpatialRegion region, double t_n)
    : rate_(rate), region_(std::move(region)), t_n_(t_n) {
  if (!(rate > 0.0)) throw ValidationError("PoissonModel: rate must be positive");
  if (!region_.bounded()) throw ValidationError("PoissonModel: region must be a rectangle");
}

double PoissonModel::intensity(const Vec2& s, double) const {
  return region_.contains(s) ? rate_ / region_.area() : 0.0;
}

Vec2 PoissonModel::spatial_moment(double) const { return rate_ * 0.5 * (region_.lo() + region_.hi()); }

}  // namespace stpp
