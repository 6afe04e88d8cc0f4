#ifndef STPP_QUADRATURE_HPP
#define STPP_QUADRATURE_HPP

#include "stpp/core.hpp"

#include <functional>
#include <vector>

namespace stpp::quad {

struct Options {
  double abs_tol = 1e-8;
  double rel_tol = 0.0;
  std::size_t max_intervals = 20000;
};

struct Result {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
  std::size_t evaluations = 0;
};

using Fn1 = std::function<double(double)>;
using Fn2 = std::function<double(double, double)>;

// Globally adaptive Gauss-Kronrod (7/15) on [a, b]: always bisects the panel
// with the largest error estimate. Throws NumericError when the tolerance is
// not met within max_intervals, reporting the achieved error.
Result integrate(const Fn1& f, double a, double b, const Options& opts = {});

// Same, with the integrand's kinks/cusps listed in `breaks` so no panel
// straddles them.
Result integrate(const Fn1& f, std::vector<double> breaks, const Options& opts = {});

// Integral over [a, inf) via t = a + x / (1 - x).
Result integrate_to_infinity(const Fn1& f, double a, const Options& opts = {});

// Adaptive tensor-product Gauss-Legendre over a rectangle with recursive 2x2
// subdivision of the worst cell. `x_breaks` / `y_breaks` seed the initial
// grid so cusps sit on cell edges.
Result integrate_2d(const Fn2& f, const Vec2& lo, const Vec2& hi, const Options& opts = {},
                    std::vector<double> x_breaks = {}, std::vector<double> y_breaks = {});

}  // namespace stpp::quad

#endif  // STPP_QUADRATURE_HPP
