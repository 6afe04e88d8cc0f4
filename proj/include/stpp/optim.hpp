#ifndef STPP_OPTIM_HPP
#define STPP_OPTIM_HPP

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace stpp::optim {

// Returns f(x); fills *grad when non-null. Non-finite values are treated as
// +inf by the line search.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  double grad_tol = 1e-6;  // on the Euclidean gradient norm
  int max_iter = 500;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_line_search = 40;
};

struct BfgsIteration {
  int iteration;
  double f;
  double grad_norm;
  double step;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<BfgsIteration> trace;  // row 0 is the starting point
};

// Quasi-Newton minimization with a strong-Wolfe line search. Every accepted
// step satisfies the sufficient-decrease condition, so the trace of f is
// non-increasing.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts = {});

// Central differences with step h * max(1, |x_i|).
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double h = 1e-5);

}  // namespace stpp::optim

#endif  // STPP_OPTIM_HPP
