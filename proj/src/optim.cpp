#include "stpp/optim.hpp"

#include "stpp/core.hpp"

#include <cmath>
#include <limits>

namespace stpp::optim {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Probe {
  double a = 0.0;
  double f = kInf;
  double d = 0.0;  // directional derivative
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& p, double f0, double d0,
             const BfgsOptions& o)
      : f_(f), x_(x), p_(p), f0_(f0), d0_(d0), o_(o) {}

  // Strong-Wolfe search; returns false when no acceptable step was found.
  // `best` then holds the lowest sufficient-decrease point, if any.
  bool run(double a_init, Probe& out) {
    Probe prev{0.0, f0_, d0_, x_, {}};
    double a = a_init;
    for (int i = 0; i < o_.max_line_search; ++i) {
      Probe cur = eval(a);
      if (!armijo(cur) || (i > 0 && cur.f >= prev.f)) return zoom(prev, cur, out);
      if (std::abs(cur.d) <= -o_.c2 * d0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.d >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      a *= 2.0;
    }
    return fallback(out);
  }

 private:
  Probe eval(double a) {
    ++evals_;
    Probe p;
    p.a = a;
    p.x = x_ + a * p_;
    p.g.resize(x_.size());
    p.f = f_(p.x, &p.g);
    if (!std::isfinite(p.f) || !p.g.allFinite()) {
      p.f = kInf;
      p.d = kInf;
    } else {
      p.d = p.g.dot(p_);
      if (armijo(p) && p.f < best_.f) best_ = p;
    }
    return p;
  }

  bool armijo(const Probe& p) const { return p.f <= f0_ + o_.c1 * p.a * d0_; }

  bool zoom(Probe lo, Probe hi, Probe& out) {
    for (int i = 0; i < o_.max_line_search; ++i) {
      const double width = hi.a - lo.a;
      double a = 0.5 * (lo.a + hi.a);
      if (std::isfinite(hi.f) && std::isfinite(lo.f)) {
        // Quadratic through (lo.a, lo.f, lo.d) and (hi.a, hi.f), safeguarded.
        const double denom = 2.0 * (hi.f - lo.f - lo.d * width);
        if (denom > 0.0) {
          const double q = lo.a - lo.d * width * width / denom;
          const double lo_b = std::min(lo.a, hi.a) + 0.1 * std::abs(width);
          const double hi_b = std::max(lo.a, hi.a) - 0.1 * std::abs(width);
          if (q > lo_b && q < hi_b) a = q;
        }
      }
      if (std::abs(width) < 1e-16 * std::max(1.0, std::abs(lo.a))) break;
      Probe cur = eval(a);
      if (!armijo(cur) || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.d) <= -o_.c2 * d0_) {
          out = std::move(cur);
          return true;
        }
        if (cur.d * (hi.a - lo.a) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    return fallback(out);
  }

  bool fallback(Probe& out) {
    if (std::isfinite(best_.f) && best_.f < f0_) {
      out = best_;
      return true;
    }
    return false;
  }

  const Objective& f_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& p_;
  double f0_;
  double d0_;
  const BfgsOptions& o_;
  Probe best_;
  int evals_ = 0;
};

}  // namespace

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.grad.resize(n);
  res.f = f(res.x, &res.grad);
  if (!std::isfinite(res.f) || !res.grad.allFinite()) throw NumericError("bfgs: objective is not finite at the initial point");
  res.trace.push_back({0, res.f, res.grad.norm(), 0.0});

  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const double gnorm = res.grad.norm();
    if (gnorm < opts.grad_tol) {
      res.converged = true;
      res.message = "gradient norm below tolerance";
      return res;
    }
    Eigen::VectorXd p = -h_inv * res.grad;
    double d0 = res.grad.dot(p);
    if (!(d0 < 0.0)) {
      // Lost descent; restart from steepest descent.
      h_inv.setIdentity();
      scaled = false;
      p = -res.grad;
      d0 = -gnorm * gnorm;
    }
    const double a_init = scaled ? 1.0 : std::min(1.0, 1.0 / gnorm);
    LineSearch ls(f, res.x, p, res.f, d0, opts);
    Probe step;
    if (!ls.run(a_init, step)) {
      res.message = "line search found no decrease";
      return res;
    }
    const Eigen::VectorXd s = step.x - res.x;
    const Eigen::VectorXd y = step.g - res.grad;
    const double sy = s.dot(y);
    res.x = std::move(step.x);
    res.grad = std::move(step.g);
    res.f = step.f;
    res.iterations = it;
    res.trace.push_back({it, res.f, res.grad.norm(), step.a});
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h_inv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  res.converged = res.grad.norm() < opts.grad_tol;
  res.message = res.converged ? "gradient norm below tolerance" : "iteration limit reached";
  return res;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace stpp::optim
