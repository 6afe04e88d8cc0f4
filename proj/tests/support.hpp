#ifndef STPP_TESTS_SUPPORT_HPP
#define STPP_TESTS_SUPPORT_HPP

#include "stpp/deepstpp.hpp"
#include "stpp/kernels.hpp"
#include "stpp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace stpp::testing {

// Random kernel parameters with `size` anchors at or before t_n.
inline deep::KernelParams random_kernel_params(Rng& rng, std::size_t size, double t_n, double beta_lo, double beta_hi,
                                               double gamma_lo = 0.3, double gamma_hi = 5.0, double max_age = 1.0) {
  deep::KernelParams kp;
  const auto m = static_cast<Eigen::Index>(size);
  kp.w.resize(m);
  kp.gamma.resize(m);
  kp.beta.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    kp.w[i] = rng.uniform(0.0, 2.0);
    kp.gamma[i] = rng.uniform(gamma_lo, gamma_hi);
    kp.beta[i] = rng.uniform(beta_lo, beta_hi);
    const double age = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, max_age);
    kp.anchors.push_back({t_n - age, Vec2(rng.uniform(-2, 2), rng.uniform(-2, 2))});
  }
  return kp;
}

// Reference compensator: adaptive quadrature of the temporal intensity.
inline double quadrature_compensator(const deep::KernelParams& kp, double t_n, double t, double tol = 1e-10) {
  return quad::integrate([&](double u) { return deep::temporal_intensity(kp, u); }, t_n, t, {.abs_tol = tol, .rel_tol = 1e-15}).value;
}

// Total mass of the conditional pdf: for each anchor, the spatial kernel's
// mass by 2D quadrature times its time weight int w_i k_t e^{-compensator}
// by 1D quadrature. Needs all beta > 0.
inline double quadrature_pdf_mass(const deep::KernelParams& kp, double t_n) {
  double mass = 0.0;
  for (std::size_t i = 0; i < kp.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double g = kp.gamma[k];
    const Vec2 c = kp.anchors[i].s;
    // e^{-g r}(1 + g r) < 1e-12 beyond r = 35 / g.
    const double r = 35.0 / g;
    const auto ks = [&](double x, double y) { return rbf_spatial(Vec2(x, y), c, g); };
    const double space = quad::integrate_2d(ks, c - Vec2(r, r), c + Vec2(r, r), {.abs_tol = 1e-9}, {c.x()}, {c.y()}).value;
    const auto ft = [&](double t) {
      return kp.w[k] * exp_temporal(t, kp.anchors[i].t, kp.beta[k]) * std::exp(-deep::temporal_compensator(kp, t_n, t));
    };
    const double time = quad::integrate_to_infinity(ft, t_n, {.abs_tol = 1e-10}).value;
    mass += space * time;
  }
  return mass;
}

inline double closed_form_pdf_mass(const deep::KernelParams& kp, double t_n) {
  double total = 0.0;
  for (std::size_t i = 0; i < kp.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    total += kp.w[k] * exp_temporal(t_n, kp.anchors[i].t, kp.beta[k]) / kp.beta[k];
  }
  return -std::expm1(-total);
}

inline deep::DeepStppConfig tiny_config(std::uint64_t seed) {
  deep::DeepStppConfig cfg;
  cfg.d_model = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_hidden = 8;
  cfg.d_z = 4;
  cfg.dec_hidden = 8;
  cfg.dec_layers = 2;
  cfg.J = 2;
  cfg.max_history = 8;
  cfg.seed = seed;
  return cfg;
}

struct ElboGradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  // Scalars whose tape and central-difference values agree only to within the
  // rounding error of the difference quotient.
  std::size_t roundoff_limited = 0;
  // Scalars at a kink (one-sided differences disagree); checked against the
  // one-sided derivative nearest the tape value.
  std::size_t kinks = 0;
};

// Central differences of elbo_loss over every scalar weight against the tape
// gradient. The latent noise and representative points are fixed by `seed`.
inline ElboGradCheck check_elbo_gradient(deep::DeepStpp& model, const EventSequence& window, const Event& target,
                                         std::uint64_t seed, double h = 1e-6, double floor = 1e-6) {
  auto& ps = model.params();
  const auto loss_at = [&] {
    nd::Tape tape;
    Rng rng(seed);
    return model.elbo_loss(tape, window, target, rng).item();
  };
  ps.zero_grad();
  double f0 = 0.0;
  {
    nd::Tape tape;
    Rng rng(seed);
    const nd::Tensor loss = model.elbo_loss(tape, window, target, rng);
    f0 = loss.item();
    tape.backward(loss);
  }
  const Eigen::VectorXd grad = ps.flatten_grad();
  const Eigen::VectorXd x0 = ps.flatten();
  ElboGradCheck out;
  Eigen::VectorXd x = x0;
  const auto rel_err = [&](double fd, double ad) { return std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), floor}); };
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x0[k]));
    x[k] = x0[k] + step;
    ps.assign(x);
    const double up = loss_at();
    x[k] = x0[k] - step;
    ps.assign(x);
    const double down = loss_at();
    x[k] = x0[k];
    const double fd = (up - down) / (2 * step);
    double rel = rel_err(fd, grad[k]);
    // The loss is a sum of many terms; allow 64 ulps of it in each evaluation.
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max({std::abs(up), std::abs(down), std::abs(f0)}) / step;
    const double right = (up - f0) / step, left = (f0 - down) / step;
    if (rel > 1e-3 && std::abs(fd - grad[k]) <= noise) {
      ++out.roundoff_limited;
      rel = 0.0;
    } else if (rel > 1e-3 && rel_err(right, left) > 0.5) {
      ++out.kinks;
      rel = std::min(rel_err(right, grad[k]), rel_err(left, grad[k]));
    }
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = "scalar " + std::to_string(k) + ": tape " + std::to_string(grad[k]) + " fd " + std::to_string(fd);
    }
  }
  ps.assign(x0);
  return out;
}

// A short random window on the unit square and a target after it.
inline WindowPair random_window(Rng& rng, int n) {
  std::vector<Event> ev;
  double t = rng.uniform(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    ev.push_back({t, Vec2(rng.uniform(), rng.uniform())});
    t += rng.exponential(2.0);
  }
  const Event target{t, Vec2(rng.uniform(), rng.uniform())};
  return {EventSequence(std::move(ev), t), target};
}

}  // namespace stpp::testing

#endif  // STPP_TESTS_SUPPORT_HPP
