#ifndef STPP_NDIFF_HPP
#define STPP_NDIFF_HPP

#include "stpp/core.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode differentiation over dense row-major matrices. Every tensor is
// two-dimensional; vectors are 1 x n rows or n x 1 columns.
namespace stpp::nd {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A trainable matrix with its gradient buffer. Lives outside any tape.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

class ParameterSet {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Flat copy of all values in registration order, and the inverse.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  Eigen::VectorXd flatten_grad() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  double item() const;
  bool requires_grad() const;
  // Gradient of the last backward() with respect to this node.
  const Mat& grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& grad_out)>;

  Tensor constant(Mat value);
  Tensor variable(Mat value);  // leaf with requires_grad, gradient kept on the tape
  Tensor param(Parameter& p);  // leaf whose gradient is added to p.grad
  Tensor scalar(double v);

  // Appends an op node. `backward` receives the output gradient and
  // accumulates into the inputs via accumulate().
  Tensor record(Mat value, std::vector<int> inputs, Backward backward);

  void accumulate(int id, const Mat& g);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const;

  // Seeds d loss / d loss = 1 and visits every node once in reverse order.
  // A second call without new nodes throws.
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
  std::size_t backward_watermark_ = 0;
  bool backward_done_ = false;
};

// Elementwise arithmetic. `b` may broadcast: same shape, 1 x cols (row),
// rows x 1 (column) or 1 x 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
// (1 - exp(-x)) / x with the limit 1 at x = 0.
Tensor exprel_neg(const Tensor& a);

Tensor sum(const Tensor& a);             // 1 x 1
Tensor mean(const Tensor& a);            // 1 x 1
Tensor sum_rows(const Tensor& a);        // 1 x cols: sum over rows
Tensor mean_rows(const Tensor& a);       // 1 x cols
Tensor logsumexp(const Tensor& a);       // 1 x 1 over all entries

enum class Axis { rows, cols };
// Softmax along `axis`: Axis::cols normalizes each row.
Tensor softmax(const Tensor& a, Axis axis = Axis::cols);
// Normalizes each row to zero mean, unit variance (no affine terms).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

Tensor concat(const std::vector<Tensor>& parts, Axis axis);
Tensor slice(const Tensor& a, Eigen::Index row0, Eigen::Index nrows, Eigen::Index col0, Eigen::Index ncols);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Eigen::Index worst_index = -1;
};

// Compares reverse-mode gradients of f (a scalar built on a fresh tape from
// the leaf `x`) against central differences with step h * max(1, |x_k|).
// The relative error uses max(|fd|, |ad|, floor) as denominator.
GradCheck check_gradient(const std::function<Tensor(Tape&, const Tensor&)>& f, const Mat& x, double h = 1e-5,
                         double floor = 1e-6);

}  // namespace stpp::nd

#endif  // STPP_NDIFF_HPP
