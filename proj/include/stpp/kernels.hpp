#ifndef STPP_KERNELS_HPP
#define STPP_KERNELS_HPP

#include "stpp/core.hpp"

#include <cmath>
#include <numbers>

namespace stpp {

// Bivariate Gaussian density. Precision and normalizer are cached at
// construction; construction rejects asymmetric or singular covariances.
template <typename Scalar = double>
class Gauss2 {
 public:
  using Vec = Vec2T<Scalar>;
  using Mat = Mat2T<Scalar>;

  Gauss2(const Vec& mean, const Mat& cov) : mean_(mean), cov_(cov) {
    using std::abs;
    using std::sqrt;
    if (!mean.allFinite() || !cov.allFinite()) throw ValidationError("Gauss2: non-finite parameters");
    if (abs(cov(0, 1) - cov(1, 0)) > Scalar(1e-12)) throw ValidationError("Gauss2: covariance is not symmetric");
    const Scalar det = cov.determinant();
    if (!(det > Scalar(0)) || !(cov(0, 0) > Scalar(0))) {
      throw NumericError("Gauss2: covariance is singular or not positive definite");
    }
    precision_ = cov.inverse();
    norm_ = Scalar(1) / (Scalar(2) * std::numbers::pi_v<Scalar> * sqrt(det));
  }

  static Gauss2 isotropic(const Vec& mean, Scalar variance) { return Gauss2(mean, Mat::Identity() * variance); }

  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  const Mat& precision() const { return precision_; }
  Scalar normalizer() const { return norm_; }
  bool diagonal() const { return cov_(0, 1) == Scalar(0); }

  // Density at mean + d.
  Scalar pdf_offset(const Vec& d) const {
    using std::exp;
    return norm_ * exp(Scalar(-0.5) * d.dot(precision_ * d));
  }
  Scalar pdf(const Vec& s) const { return pdf_offset(s - mean_); }

  Gauss2 recentred(const Vec& mean) const {
    Gauss2 g = *this;
    g.mean_ = mean;
    return g;
  }

 private:
  Vec mean_;
  Mat cov_;
  Mat precision_;
  Scalar norm_;
};

template <typename Scalar>
Scalar gauss2_pdf(const Gauss2<Scalar>& g, const Vec2T<Scalar>& s) {
  return g.pdf(s);
}

// Probability mass of g inside a rectangle: product of 1D normal CDF
// differences for diagonal covariances, adaptive 2D quadrature otherwise.
double gauss2_mass(const Gauss2<double>& g, const SpatialRegion& region, double tol = 1e-8);

double gauss2_truncated_pdf(const Gauss2<double>& g, const Vec2& s, const SpatialRegion& region);

// Gaussian renormalized to a rectangle, with its mass cached.
class TruncatedGauss2 {
 public:
  TruncatedGauss2(Gauss2<double> g, SpatialRegion region);

  double pdf(const Vec2& s) const { return region_.contains(s) ? g_.pdf(s) / mass_ : 0.0; }
  double mass() const { return mass_; }
  const Gauss2<double>& base() const { return g_; }
  const SpatialRegion& region() const { return region_; }
  // Same shape, different centre; recomputes the mass.
  TruncatedGauss2 recentred(const Vec2& mean) const { return {g_.recentred(mean), region_}; }

 private:
  Gauss2<double> g_;
  SpatialRegion region_;
  double mass_;
};

// alpha(gamma) = integral over the plane of exp(-gamma |s|) = 2 pi / gamma^2.
template <typename Scalar>
Scalar rbf_normalizer(Scalar gamma) {
  return Scalar(2) * std::numbers::pi_v<Scalar> / (gamma * gamma);
}

// Normalized exponential-norm spatial kernel exp(-gamma |s - s_i|) / alpha.
template <typename Scalar>
Scalar rbf_spatial(const Vec2T<Scalar>& s, const Vec2T<Scalar>& s_i, Scalar gamma) {
  using std::exp;
  return exp(-gamma * (s - s_i).norm()) / rbf_normalizer(gamma);
}

// exp(-beta |t - t_i|); beta may be negative.
template <typename Scalar>
Scalar exp_temporal(Scalar t, Scalar t_i, Scalar beta) {
  using std::abs;
  using std::exp;
  return exp(-beta * abs(t - t_i));
}

// g_1(dt) = alpha exp(-beta dt), alpha, beta > 0.
struct ExpDecay {
  double alpha;
  double beta;

  ExpDecay(double alpha_, double beta_) : alpha(alpha_), beta(beta_) {
    if (!(alpha_ > 0.0) || !(beta_ > 0.0)) throw ValidationError("ExpDecay: alpha and beta must be positive");
  }
  double operator()(double dt) const { return alpha * std::exp(-beta * dt); }
  // Integral of g_1 over [0, dt].
  double integral(double dt) const { return alpha / beta * -std::expm1(-beta * dt); }
};

}  // namespace stpp

#endif  // STPP_KERNELS_HPP
