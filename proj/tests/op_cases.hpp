#ifndef STPP_TESTS_OP_CASES_HPP
#define STPP_TESTS_OP_CASES_HPP

#include "stpp/ndiff.hpp"
#include "stpp/rng.hpp"

#include <functional>
#include <vector>

namespace stpp::testing {

using namespace stpp::nd;


inline Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.5, double hi = 1.5) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// A fixed random projection turns any tensor into a scalar with nontrivial
// upstream gradients.
inline Tensor project(Tape& tape, const Tensor& y, std::uint64_t seed) {
  Rng rng(seed, 99);
  return sum(mul(y, tape.constant(random_mat(y.rows(), y.cols(), rng))));
}

using Op = std::function<Tensor(Tape&, const Tensor&)>;

struct OpCase {
  const char* name;
  Eigen::Index rows, cols;
  Op op;
  double lo = -1.5, hi = 1.5;
};

inline std::vector<OpCase> op_cases() {
  Rng crng(4);
  const Mat other = random_mat(3, 4, crng);
  const Mat right = random_mat(4, 2, crng);
  const Mat rowv = random_mat(1, 4, crng);
  const Mat colv = random_mat(3, 1, crng);
  return {
      {"add", 3, 4, [=](Tape& t, const Tensor& x) { return add(x, t.constant(other)); }},
      {"add_row_bcast", 3, 4, [=](Tape& t, const Tensor& x) { return add(t.constant(other), slice(x, 0, 1, 0, 4)); }},
      {"sub", 3, 4, [=](Tape& t, const Tensor& x) { return sub(t.constant(other), x); }},
      {"mul", 3, 4, [=](Tape& t, const Tensor& x) { return mul(x, t.constant(other)); }},
      {"mul_self", 3, 4, [](Tape&, const Tensor& x) { return mul(x, x); }},
      {"mul_row_bcast", 3, 4, [=](Tape& t, const Tensor& x) { return mul(x, t.constant(rowv)); }},
      {"mul_col_bcast", 3, 4, [=](Tape& t, const Tensor& x) { return mul(t.constant(other), slice(x, 0, 3, 1, 1)); }},
      {"scale", 3, 4, [](Tape&, const Tensor& x) { return scale(x, -2.5); }},
      {"matmul_left", 3, 4, [=](Tape& t, const Tensor& x) { return matmul(x, t.constant(right)); }},
      {"matmul_right", 4, 2, [=](Tape& t, const Tensor& x) { return matmul(t.constant(other), x); }},
      {"transpose", 3, 4, [](Tape&, const Tensor& x) { return transpose(x); }},
      {"softplus", 3, 4, [](Tape&, const Tensor& x) { return softplus(x); }, -6, 6},
      {"exp", 3, 4, [](Tape&, const Tensor& x) { return exp(x); }},
      {"log", 3, 4, [](Tape&, const Tensor& x) { return log(x); }, 0.2, 3.0},
      {"relu", 3, 4, [](Tape&, const Tensor& x) { return relu(x); }},
      {"square", 3, 4, [](Tape&, const Tensor& x) { return square(x); }},
      {"exprel_neg", 3, 4, [](Tape&, const Tensor& x) { return exprel_neg(x); }, -3, 3},
      {"exprel_neg_small", 3, 4, [](Tape&, const Tensor& x) { return exprel_neg(scale(x, 1e-3)); }},
      {"sum", 3, 4, [](Tape&, const Tensor& x) { return sum(x); }},
      {"mean", 3, 4, [](Tape&, const Tensor& x) { return mean(x); }},
      {"sum_rows", 3, 4, [](Tape&, const Tensor& x) { return sum_rows(x); }},
      {"mean_rows", 3, 4, [](Tape&, const Tensor& x) { return mean_rows(x); }},
      {"logsumexp", 3, 4, [](Tape&, const Tensor& x) { return logsumexp(x); }},
      {"softmax_cols", 3, 4, [](Tape&, const Tensor& x) { return softmax(x, Axis::cols); }},
      {"softmax_rows", 3, 4, [](Tape&, const Tensor& x) { return softmax(x, Axis::rows); }},
      {"layer_norm", 3, 4, [](Tape&, const Tensor& x) { return layer_norm(x); }},
      {"concat_rows", 3, 4, [=](Tape& t, const Tensor& x) { return concat({x, t.constant(other)}, Axis::rows); }},
      {"concat_cols", 3, 4, [=](Tape& t, const Tensor& x) { return concat({t.constant(colv), x}, Axis::cols); }},
      {"slice", 3, 4, [](Tape&, const Tensor& x) { return slice(x, 1, 2, 1, 3); }},
  };
}

}  // namespace stpp::testing

#endif  // STPP_TESTS_OP_CASES_HPP
