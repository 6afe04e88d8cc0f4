#ifndef STPP_MODEL_HPP
#define STPP_MODEL_HPP

#include "stpp/core.hpp"

namespace stpp {

// A fitted conditional process frozen at the end of a history: everything is
// conditioned on the events up to last_time().
class TemporalModel {
 public:
  virtual ~TemporalModel() = default;

  // t_n: time of the last conditioning event.
  virtual double last_time() const = 0;
  // lambda*(t), for t >= t_n, assuming no event in (t_n, t).
  virtual double temporal_intensity(double t) const = 0;
  // Integral of lambda*(tau) over [t_n, t].
  virtual double compensator(double t) const = 0;
};

class SpatioTemporalModel : public TemporalModel {
 public:
  // lambda*(s, t) for t >= t_n.
  virtual double intensity(const Vec2& s, double t) const = 0;
  // Integral of s * lambda*(s, t) ds over the spatial domain.
  virtual Vec2 spatial_moment(double t) const = 0;
};

struct PredictOptions {
  double tail_tol = 1e-8;
  double abs_tol = 1e-10;
  // Accept a next-event distribution whose total mass is below one (finite
  // compensator at infinity) and return the expectation conditional on an
  // event occurring. When false, such models raise NumericError.
  bool allow_defective = false;
  double max_mean_gaps = 1e6;
};

// E[t_{n+1} | H] = integral of t lambda*(t) exp(-Lambda(t)) over (t_n, inf).
double predict_next_time(const TemporalModel& model, const PredictOptions& opts = {});

// E[s_{n+1} | H] = integral over (t_n, inf) of exp(-Lambda(t)) times the
// spatial first moment of lambda*(., t).
Vec2 predict_next_location(const SpatioTemporalModel& model, const PredictOptions& opts = {});

// Total mass of the next-event time density on (t_n, inf), i.e. 1 - S(inf).
double next_event_mass(const TemporalModel& model, const PredictOptions& opts = {});

// Homogeneous Poisson process with a uniform spatial density on a rectangle.
class PoissonModel final : public SpatioTemporalModel {
 public:
  PoissonModel(double rate, SpatialRegion region, double t_n);

  double last_time() const override { return t_n_; }
  double temporal_intensity(double) const override { return rate_; }
  double compensator(double t) const override { return rate_ * (t - t_n_); }
  double intensity(const Vec2& s, double) const override;
  Vec2 spatial_moment(double) const override;

 private:
  double rate_;
  SpatialRegion region_;
  double t_n_;
};

}  // namespace stpp

#endif  // STPP_MODEL_HPP
