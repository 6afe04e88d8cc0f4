#include "stpp/ndiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stpp::nd {
namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << "[" << m.rows() << " x " << m.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape()) throw ValidationError("tensors belong to different tapes");
}

#ifndef NDEBUG
void check_finite(const char* op, const Mat& m) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": non-finite value in output");
}
#else
void check_finite(const char*, const Mat&) {}
#endif

enum class Bcast { same, row, col, scalar };

Bcast broadcast_kind(const char* op, const Mat& a, const Mat& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  shape_error(op, a, b);
}

Mat expand(const Mat& b, Bcast k, Eigen::Index rows, Eigen::Index cols) {
  switch (k) {
    case Bcast::same: return b;
    case Bcast::row: return b.replicate(rows, 1);
    case Bcast::col: return b.replicate(1, cols);
    case Bcast::scalar: return Mat::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Mat reduce(const Mat& g, Bcast k) {
  switch (k) {
    case Bcast::same: return g;
    case Bcast::row: return g.colwise().sum();
    case Bcast::col: return g.rowwise().sum();
    case Bcast::scalar: return Mat::Constant(1, 1, g.sum());
  }
  return g;
}

template <class F, class D>
Tensor unary(const char* name, const Tensor& a, F f, D dfdx) {
  Tape& tape = *a.tape();
  Mat out = a.value().unaryExpr(f);
  check_finite(name, out);
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, dfdx](Tape& t, const Mat& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ia).unaryExpr(dfdx)));
  });
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double exprel_neg_scalar(double x) {
  if (x == 0.0) return 1.0;
  if (std::abs(x) < 1e-3) return 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
  return -std::expm1(-x) / x;
}

double exprel_neg_deriv(double x) {
  if (std::abs(x) < 1e-2) {
    const double x2 = x * x;
    return -0.5 + x / 3.0 - x2 / 8.0 + x2 * x / 30.0 - x2 * x2 / 144.0 + x2 * x2 * x / 840.0;
  }
  return (x * std::exp(-x) + std::expm1(-x)) / (x * x);
}

}  // namespace

// ---------------------------------------------------------------- params

Parameter& ParameterSet::add(const std::string& name, Mat init) {
  if (contains(name)) throw ValidationError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Mat::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ValidationError("unknown parameter: " + name);
}

const Parameter& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero(p->value.rows(), p->value.cols());
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Eigen::VectorXd ParameterSet::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(scalar_count()));
  Eigen::Index k = 0;
  for (const auto& p : params_) {
    out.segment(k, p->value.size()) = Eigen::Map<const Eigen::VectorXd>(p->value.data(), p->value.size());
    k += p->value.size();
  }
  return out;
}

Eigen::VectorXd ParameterSet::flatten_grad() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(scalar_count()));
  Eigen::Index k = 0;
  for (const auto& p : params_) {
    out.segment(k, p->grad.size()) = Eigen::Map<const Eigen::VectorXd>(p->grad.data(), p->grad.size());
    k += p->grad.size();
  }
  return out;
}

void ParameterSet::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(scalar_count())) {
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                     std::to_string(scalar_count()));
  }
  Eigen::Index k = 0;
  for (auto& p : params_) {
    Eigen::Map<Eigen::VectorXd>(p->value.data(), p->value.size()) = flat.segment(k, p->value.size());
    k += p->value.size();
  }
}

// ---------------------------------------------------------------- tape

const Mat& Tensor::value() const { return tape_->value(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }
const Mat& Tensor::grad() const { return tape_->grad(id_); }

double Tensor::item() const {
  const Mat& v = value();
  if (v.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(v));
  return v(0, 0);
}

Tensor Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor Tape::variable(Mat value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor Tape::scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

Tensor Tape::record(Mat value, std::vector<int> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (int i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) shape_error("accumulate", n.value, g);
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

const Mat& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (!n.has_grad) throw ValidationError("no gradient recorded for node " + std::to_string(id));
  return n.grad;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw ValidationError("backward: loss belongs to another tape");
  if (backward_done_ && nodes_.size() == backward_watermark_) {
    throw ValidationError("backward called twice without a new forward pass");
  }
  if (loss.value().size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.value()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(loss.id(), Mat::Ones(1, 1));
  visits_ = 0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    ++visits_;
    if (!n.requires_grad) continue;
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
      continue;
    }
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      if (n.param->grad.size() == 0) n.param->grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }
  backward_done_ = true;
  backward_watermark_ = nodes_.size();
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  const Bcast k = broadcast_kind("add", a.value(), b.value());
  Mat out = a.value() + expand(b.value(), k, a.rows(), a.cols());
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, k](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, reduce(g, k));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  const Bcast k = broadcast_kind("sub", a.value(), b.value());
  Mat out = a.value() - expand(b.value(), k, a.rows(), a.cols());
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, k](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -reduce(g, k));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  const Bcast k = broadcast_kind("mul", a.value(), b.value());
  Mat bx = expand(b.value(), k, a.rows(), a.cols());
  Mat out = a.value().cwiseProduct(bx);
  check_finite("mul", out);
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, k, bx = std::move(bx)](Tape& t, const Mat& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(bx));
    if (t.requires_grad(ib)) t.accumulate(ib, reduce(g.cwiseProduct(t.value(ia)), k));
  });
}

Tensor scale(const Tensor& a, double c) {
  const int ia = a.id();
  return a.tape()->record(a.value() * c, {ia}, [ia, c](Tape& t, const Mat& g) { t.accumulate(ia, g * c); });
}

Tensor add_scalar(const Tensor& a, double c) {
  const int ia = a.id();
  return a.tape()->record(a.value().array() + c, {ia}, [ia](Tape& t, const Mat& g) { t.accumulate(ia, g); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Mat out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Mat& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Tensor transpose(const Tensor& a) {
  const int ia = a.id();
  return a.tape()->record(a.value().transpose(), {ia},
                          [ia](Tape& t, const Mat& g) { t.accumulate(ia, g.transpose()); });
}

Tensor softplus(const Tensor& a) { return unary("softplus", a, softplus_scalar, sigmoid); }

Tensor exp(const Tensor& a) {
  Mat out = a.value().array().exp();
  check_finite("exp", out);
  const int ia = a.id();
  const int self = static_cast<int>(a.tape()->size());
  return a.tape()->record(std::move(out), {ia}, [ia, self](Tape& t, const Mat& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(self)));
  });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw NumericError("log of a non-positive value");
  return unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary("clamp_min", a, [lo](double x) { return x < lo ? lo : x; },
               [lo](double x) { return x < lo ? 0.0 : 1.0; });
}

Tensor exprel_neg(const Tensor& a) { return unary("exprel_neg", a, exprel_neg_scalar, exprel_neg_deriv); }

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->record(Mat::Constant(1, 1, a.value().sum()), {ia},
                          [ia, r, c](Tape& t, const Mat& g) { t.accumulate(ia, Mat::Constant(r, c, g(0, 0))); });
}

Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor sum_rows(const Tensor& a) {
  const int ia = a.id();
  const Eigen::Index r = a.rows();
  return a.tape()->record(a.value().colwise().sum(), {ia},
                          [ia, r](Tape& t, const Mat& g) { t.accumulate(ia, g.replicate(r, 1)); });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows of an empty tensor");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Tensor logsumexp(const Tensor& a) {
  const Mat& x = a.value();
  if (x.size() == 0) throw ShapeError("logsumexp of an empty tensor");
  const double m = x.maxCoeff();
  Mat w = (x.array() - m).exp();
  const double s = w.sum();
  w /= s;
  const int ia = a.id();
  return a.tape()->record(Mat::Constant(1, 1, m + std::log(s)), {ia},
                          [ia, w = std::move(w)](Tape& t, const Mat& g) { t.accumulate(ia, w * g(0, 0)); });
}

Tensor softmax(const Tensor& a, Axis axis) {
  if (axis == Axis::rows) return transpose(softmax(transpose(a), Axis::cols));
  const Mat& x = a.value();
  Mat y = (x.colwise() - x.rowwise().maxCoeff()).array().exp();
  y.array().colwise() /= y.rowwise().sum().array();
  const int ia = a.id();
  const int self = static_cast<int>(a.tape()->size());
  return a.tape()->record(std::move(y), {ia}, [ia, self](Tape& t, const Mat& g) {
    const Mat& y = t.value(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Mat d = g;
    d.colwise() -= dot;
    t.accumulate(ia, d.cwiseProduct(y));
  });
}

Tensor layer_norm(const Tensor& a, double eps) {
  const Mat& x = a.value();
  const double c = static_cast<double>(x.cols());
  const Eigen::VectorXd mu = x.rowwise().mean();
  Mat centred = x.colwise() - mu;
  const Eigen::VectorXd inv_sigma = ((centred.array().square().rowwise().sum() / c) + eps).rsqrt();
  Mat y = centred.array().colwise() * inv_sigma.array();
  const int ia = a.id();
  const int self = static_cast<int>(a.tape()->size());
  return a.tape()->record(std::move(y), {ia}, [ia, self, inv_sigma, c](Tape& t, const Mat& g) {
    const Mat& y = t.value(self);
    const Eigen::VectorXd g_mean = g.rowwise().sum() / c;
    const Eigen::VectorXd gy_mean = g.cwiseProduct(y).rowwise().sum() / c;
    Mat d = g;
    d.colwise() -= g_mean;
    d -= (y.array().colwise() * gy_mean.array()).matrix();
    d.array().colwise() *= inv_sigma.array();
    t.accumulate(ia, d);
  });
}

// ---------------------------------------------------------------- structure

Tensor concat(const std::vector<Tensor>& parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape* tape = parts.front().tape();
  Eigen::Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.tape() != tape) throw ValidationError("tensors belong to different tapes");
    if (axis == Axis::rows) {
      if (rows && p.cols() != cols) shape_error("concat", parts.front().value(), p.value());
      cols = p.cols();
      rows += p.rows();
    } else {
      if (cols && p.rows() != rows) shape_error("concat", parts.front().value(), p.value());
      rows = p.rows();
      cols += p.cols();
    }
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    if (axis == Axis::rows) {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    }
    ids.push_back(p.id());
  }
  return tape->record(std::move(out), ids, [ids, axis](Tape& t, const Mat& g) {
    Eigen::Index o = 0;
    for (int id : ids) {
      const Mat& v = t.value(id);
      if (axis == Axis::rows) {
        t.accumulate(id, g.middleRows(o, v.rows()));
        o += v.rows();
      } else {
        t.accumulate(id, g.middleCols(o, v.cols()));
        o += v.cols();
      }
    }
  });
}

Tensor slice(const Tensor& a, Eigen::Index row0, Eigen::Index nrows, Eigen::Index col0, Eigen::Index ncols) {
  if (row0 < 0 || col0 < 0 || nrows < 0 || ncols < 0 || row0 + nrows > a.rows() || col0 + ncols > a.cols()) {
    std::ostringstream os;
    os << "slice [" << row0 << "+" << nrows << ", " << col0 << "+" << ncols << "] out of " << shape_str(a.value());
    throw ShapeError(os.str());
  }
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->record(a.value().block(row0, col0, nrows, ncols), {ia},
                          [=](Tape& t, const Mat& g) {
                            Mat full = Mat::Zero(r, c);
                            full.block(row0, col0, nrows, ncols) = g;
                            t.accumulate(ia, full);
                          });
}

// ---------------------------------------------------------------- checks

GradCheck check_gradient(const std::function<Tensor(Tape&, const Tensor&)>& f, const Mat& x, double h, double floor) {
  Mat ad;
  {
    Tape tape;
    Tensor v = tape.variable(x);
    Tensor y = f(tape, v);
    tape.backward(y);
    ad = v.grad();
  }
  auto eval = [&](const Mat& at) {
    Tape tape;
    return f(tape, tape.variable(at)).item();
  };
  GradCheck out;
  Mat xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x.data()[k]));
    xp.data()[k] = x.data()[k] + step;
    const double fp = eval(xp);
    xp.data()[k] = x.data()[k] - step;
    const double fm = eval(xp);
    xp.data()[k] = x.data()[k];
    const double fd = (fp - fm) / (2.0 * step);
    const double a = ad.data()[k];
    const double abs_err = std::abs(fd - a);
    const double rel = abs_err / std::max({std::abs(fd), std::abs(a), floor});
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = k;
    }
    out.max_abs_error = std::max(out.max_abs_error, abs_err);
  }
  return out;
}

}  // namespace stpp::nd
