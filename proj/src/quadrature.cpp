#include "stpp/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <sstream>

namespace stpp::quad {
namespace {

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gk15(const Fn1& f, double a, double b, std::size_t& evals) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err);
  evals += 15;
  if (!std::isfinite(v)) throw NumericError("quadrature: non-finite integrand value");
  return {a, b, v, err};
}

bool converged(double total_err, double total, const Options& o) {
  return total_err <= std::max(o.abs_tol, o.rel_tol * std::abs(total));
}

[[noreturn]] void fail(const char* what, double err) {
  std::ostringstream os;
  os << what << ": tolerance not met, achieved error " << err;
  throw NumericError(os.str());
}

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
struct Rule {
  std::array<double, 8> x{};
  std::array<double, 8> w{};
  Rule() {
    const auto& ax = boost::math::quadrature::gauss<double, 8>::abscissa();
    const auto& aw = boost::math::quadrature::gauss<double, 8>::weights();
    for (std::size_t i = 0; i < 4; ++i) {
      x[i] = -ax[i];
      w[i] = aw[i];
      x[7 - i] = ax[i];
      w[7 - i] = aw[i];
    }
  }
};

const Rule& rule() {
  static const Rule r;
  return r;
}

double tensor_gl(const Fn2& f, double x0, double x1, double y0, double y1, std::size_t& evals) {
  const auto& r = rule();
  const double cx = 0.5 * (x0 + x1), hx = 0.5 * (x1 - x0);
  const double cy = 0.5 * (y0 + y1), hy = 0.5 * (y1 - y0);
  double acc = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 8; ++j) row += r.w[j] * f(cx + hx * r.x[i], cy + hy * r.x[j]);
    acc += r.w[i] * row;
  }
  evals += 64;
  if (!std::isfinite(acc)) throw NumericError("quadrature: non-finite integrand value");
  return acc * hx * hy;
}

struct Cell {
  double x0, x1, y0, y1, value, error;
  bool operator<(const Cell& o) const { return error < o.error; }
};

Cell make_cell(const Fn2& f, double x0, double x1, double y0, double y1, std::size_t& evals) {
  // Error estimate: coarse rule vs. the sum over the four children.
  const double coarse = tensor_gl(f, x0, x1, y0, y1, evals);
  const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
  const double fine = tensor_gl(f, x0, xm, y0, ym, evals) + tensor_gl(f, xm, x1, y0, ym, evals) +
                      tensor_gl(f, x0, xm, ym, y1, evals) + tensor_gl(f, xm, x1, ym, y1, evals);
  return {x0, x1, y0, y1, fine, std::abs(fine - coarse)};
}

std::vector<double> clean_breaks(std::vector<double> b, double lo, double hi) {
  b.push_back(lo);
  b.push_back(hi);
  std::erase_if(b, [&](double v) { return !(v >= lo && v <= hi); });
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

}  // namespace

Result integrate(const Fn1& f, std::vector<double> breaks, const Options& opts) {
  if (breaks.size() < 2) throw ValidationError("integrate: need at least two break points");
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  Result res;
  std::priority_queue<Panel> heap;
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    Panel p = gk15(f, breaks[i], breaks[i + 1], res.evaluations);
    total += p.value;
    total_err += p.error;
    heap.push(p);
  }
  while (!converged(total_err, total, opts)) {
    if (heap.size() >= opts.max_intervals) fail("integrate", total_err);
    Panel p = heap.top();
    heap.pop();
    const double m = 0.5 * (p.a + p.b);
    if (!(m > p.a && m < p.b)) {
      // Panel is at machine resolution; its estimate is final.
      total_err -= p.error;
      p.error = 0.0;
      heap.push(p);
      continue;
    }
    Panel l = gk15(f, p.a, m, res.evaluations);
    Panel r = gk15(f, m, p.b, res.evaluations);
    total += l.value + r.value - p.value;
    total_err += l.error + r.error - p.error;
    heap.push(l);
    heap.push(r);
  }
  // Re-sum to drop accumulated update round-off.
  total = 0.0;
  total_err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_err += heap.top().error;
    heap.pop();
  }
  res.value = total;
  res.error = total_err;
  return res;
}

Result integrate(const Fn1& f, double a, double b, const Options& opts) {
  if (a == b) return {};
  if (a > b) {
    Result r = integrate(f, std::vector<double>{b, a}, opts);
    r.value = -r.value;
    return r;
  }
  return integrate(f, std::vector<double>{a, b}, opts);
}

Result integrate_to_infinity(const Fn1& f, double a, const Options& opts) {
  auto g = [&](double x) {
    const double u = 1.0 - x;
    const double t = a + x / u;
    const double v = f(t);
    return v == 0.0 ? 0.0 : v / (u * u);
  };
  return integrate(g, 0.0, 1.0, opts);
}

Result integrate_2d(const Fn2& f, const Vec2& lo, const Vec2& hi, const Options& opts,
                    std::vector<double> x_breaks, std::vector<double> y_breaks) {
  const auto xs = clean_breaks(std::move(x_breaks), lo.x(), hi.x());
  const auto ys = clean_breaks(std::move(y_breaks), lo.y(), hi.y());
  Result res;
  std::priority_queue<Cell> heap;
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      Cell c = make_cell(f, xs[i], xs[i + 1], ys[j], ys[j + 1], res.evaluations);
      total += c.value;
      total_err += c.error;
      heap.push(c);
    }
  }
  while (!converged(total_err, total, opts)) {
    if (heap.size() >= opts.max_intervals) fail("integrate_2d", total_err);
    const Cell c = heap.top();
    heap.pop();
    const double xm = 0.5 * (c.x0 + c.x1), ym = 0.5 * (c.y0 + c.y1);
    const std::array<Cell, 4> kids{make_cell(f, c.x0, xm, c.y0, ym, res.evaluations),
                                   make_cell(f, xm, c.x1, c.y0, ym, res.evaluations),
                                   make_cell(f, c.x0, xm, ym, c.y1, res.evaluations),
                                   make_cell(f, xm, c.x1, ym, c.y1, res.evaluations)};
    total -= c.value;
    total_err -= c.error;
    for (const auto& k : kids) {
      total += k.value;
      total_err += k.error;
      heap.push(k);
    }
  }
  total = 0.0;
  total_err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_err += heap.top().error;
    heap.pop();
  }
  res.value = total;
  res.error = total_err;
  return res;
}

}  // namespace stpp::quad
