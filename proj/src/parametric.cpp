#include "stpp/parametric.hpp"

#include "stpp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace stpp {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kUnderflow = 745.0;  // exp(-745) == 0 in double

Mat2 diag2(double a) { return Mat2::Identity() * a; }

void check_spd(const Mat2& m, const char* name) {
  if (!m.allFinite() || std::abs(m(0, 1) - m(1, 0)) > 1e-12 || !(m(0, 0) > 0.0) || !(m.determinant() > 0.0)) {
    throw ValidationError(std::string(name) + " must be symmetric positive definite");
  }
}

nlohmann::json mat_json(const Mat2& m) { return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)}; }

Mat2 mat_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 4) {
    throw ValidationError(std::string("parameter '") + key + "' must be a 4-element row-major array");
  }
  Mat2 m;
  m << j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>(), j[key][3].get<double>();
  return m;
}

Vec2 vec_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2) {
    throw ValidationError(std::string("parameter '") + key + "' must be a 2-element array");
  }
  return {j[key][0].get<double>(), j[key][1].get<double>()};
}

double num_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) throw ValidationError(std::string("parameter '") + key + "' must be a number");
  return j[key].get<double>();
}

// Sum over history of exp(-beta (t - t_j)) for events strictly before t.
double excitation(std::span<const Event> history, double beta, double t) {
  double acc = 0.0;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->t >= t) continue;
    const double x = beta * (t - it->t);
    if (x > kUnderflow) break;
    acc += std::exp(-x);
  }
  return acc;
}

Mat2 cholesky_from(const double* th) {
  Mat2 l;
  l << std::exp(th[0]), 0.0, th[1], std::exp(th[2]);
  return l * l.transpose();
}

void cholesky_into(const Mat2& cov, double* th) {
  const Eigen::LLT<Mat2> llt(cov);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance is not positive definite");
  const Mat2 l = llt.matrixL();
  th[0] = std::log(l(0, 0));
  th[1] = l(1, 0);
  th[2] = std::log(l(1, 1));
}

// d f / d(log-Cholesky coordinates), given G = d f / d Sigma (symmetric).
void cholesky_chain(const Mat2& g, const Mat2& cov, double* out) {
  const Eigen::LLT<Mat2> llt(cov);
  const Mat2 l = llt.matrixL();
  const Mat2 dl = 2.0 * g * l;
  out[0] = dl(0, 0) * l(0, 0);
  out[1] = dl(1, 0);
  out[2] = dl(1, 1) * l(1, 1);
}

double horizon_of(const EventSequence& seq, const LoglikOptions& opts) {
  if (opts.horizon) {
    if (!seq.empty() && *opts.horizon < seq.back().t) throw ValidationError("likelihood horizon precedes the last event");
    return *opts.horizon;
  }
  return seq.empty() ? seq.t_end() : seq.back().t;
}

}  // namespace

// ---------------------------------------------------------------- params

void SthpParams::validate() const {
  if (!(mu > 0.0) || !(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(mu) || !std::isfinite(alpha) ||
      !std::isfinite(beta)) {
    throw ValidationError("STHP parameters mu, alpha, beta must be positive and finite");
  }
  if (!s_mu.allFinite()) throw ValidationError("STHP s_mu must be finite");
  check_spd(cov_g0, "cov_g0");
  check_spd(cov_g2, "cov_g2");
}

SthpParams SthpParams::preset(const std::string& name) {
  if (name == "ds1") return {0.2, 0.5, 1.0, Vec2::Zero(), diag2(0.2), diag2(0.5)};
  if (name == "ds2") return {0.15, 0.5, 0.6, Vec2::Zero(), diag2(5.0), diag2(0.1)};
  if (name == "ds3") return {1.0, 0.3, 2.0, Vec2::Zero(), diag2(1.0), diag2(0.1)};
  throw ValidationError("unknown STHP preset '" + name + "' (valid: ds1, ds2, ds3)");
}

std::vector<std::string> SthpParams::preset_names() { return {"ds1", "ds2", "ds3"}; }

void StscParams::validate() const {
  if (!(mu > 0.0) || !(alpha > 0.0) || !(beta > 0.0)) {
    throw ValidationError("STSC parameters mu, alpha, beta must be positive");
  }
  if (!region.bounded()) throw ValidationError("STSC region must be a rectangle");
  check_spd(cov_g0, "cov_g0");
  check_spd(cov_g2, "cov_g2");
}

StscParams StscParams::preset(const std::string& name) {
  StscParams p;
  if (name == "ds1") {
    p.alpha = 0.2;
    p.cov_g0 = diag2(1.0);
    p.cov_g2 = diag2(0.85);
  } else if (name == "ds2") {
    p.alpha = 0.3;
    p.cov_g0 = diag2(0.4);
    p.cov_g2 = diag2(0.3);
  } else if (name == "ds3") {
    p.alpha = 0.4;
    p.cov_g0 = diag2(0.25);
    p.cov_g2 = diag2(0.2);
  } else {
    throw ValidationError("unknown STSC preset '" + name + "' (valid: ds1, ds2, ds3)");
  }
  p.mu = 1.0;
  p.beta = 0.2;
  return p;
}

std::vector<std::string> StscParams::preset_names() { return {"ds1", "ds2", "ds3"}; }

nlohmann::json to_json(const SthpParams& p) {
  return {{"process", "sthp"},       {"mu", p.mu},
          {"alpha", p.alpha},        {"beta", p.beta},
          {"s_mu", {p.s_mu.x(), p.s_mu.y()}}, {"cov_g0", mat_json(p.cov_g0)},
          {"cov_g2", mat_json(p.cov_g2)}};
}

SthpParams sthp_from_json(const nlohmann::json& j) {
  SthpParams p{num_from(j, "mu"), num_from(j, "alpha"), num_from(j, "beta"),
               vec_from(j, "s_mu"), mat_from(j, "cov_g0"), mat_from(j, "cov_g2")};
  p.validate();
  return p;
}

nlohmann::json to_json(const StscParams& p) {
  return {{"process", "stsc"},
          {"mu", p.mu},
          {"alpha", p.alpha},
          {"beta", p.beta},
          {"g0_mean", {p.g0_mean.x(), p.g0_mean.y()}},
          {"cov_g0", mat_json(p.cov_g0)},
          {"cov_g2", mat_json(p.cov_g2)},
          {"region", {p.region.lo().x(), p.region.lo().y(), p.region.hi().x(), p.region.hi().y()}}};
}

StscParams stsc_from_json(const nlohmann::json& j) {
  StscParams p;
  p.mu = num_from(j, "mu");
  p.alpha = num_from(j, "alpha");
  p.beta = num_from(j, "beta");
  p.g0_mean = vec_from(j, "g0_mean");
  p.cov_g0 = mat_from(j, "cov_g0");
  p.cov_g2 = mat_from(j, "cov_g2");
  if (!j.contains("region") || !j["region"].is_array() || j["region"].size() != 4) {
    throw ValidationError("parameter 'region' must be [lo_x, lo_y, hi_x, hi_y]");
  }
  const auto& r = j["region"];
  p.region = SpatialRegion::rectangle(Vec2(r[0].get<double>(), r[1].get<double>()),
                                      Vec2(r[2].get<double>(), r[3].get<double>()));
  p.validate();
  return p;
}

// ---------------------------------------------------------------- intensities

double sthp_intensity(const SthpParams& p, std::span<const Event> history, const Vec2& s, double t) {
  const Gauss2<double> g0(p.s_mu, p.cov_g0);
  const Gauss2<double> g2(Vec2::Zero(), p.cov_g2);
  double lam = p.mu * g0.pdf(s);
  for (const auto& e : history) {
    if (e.t >= t) break;
    lam += p.alpha * std::exp(-p.beta * (t - e.t)) * g2.pdf_offset(s - e.s);
  }
  return lam;
}

double sthp_temporal_intensity(const SthpParams& p, std::span<const Event> history, double t) {
  return p.mu + p.alpha * excitation(history, p.beta, t);
}

double stsc_intensity(const StscParams& p, std::span<const Event> history, const Vec2& s, double t) {
  const TruncatedGauss2 g0(Gauss2<double>(p.g0_mean, p.cov_g0), p.region);
  const Gauss2<double> g2(Vec2::Zero(), p.cov_g2);
  double sup = 0.0;
  for (const auto& e : history) {
    if (e.t >= t) break;
    sup += p.alpha * TruncatedGauss2(g2.recentred(e.s), p.region).pdf(s);
  }
  return p.mu * std::exp(g0.pdf(s) * p.beta * t - sup);
}

// ---------------------------------------------------------------- SthpModel

SthpModel::SthpModel(SthpParams params, EventSequence history)
    : params_(std::move(params)),
      history_(std::move(history)),
      g0_(params_.s_mu, params_.cov_g0),
      g2_(Vec2::Zero(), params_.cov_g2) {
  params_.validate();
  t_n_ = history_.empty() ? history_.t_end() : history_.back().t;
  // Include the event at t_n itself.
  excitation_at_tn_ = excitation(history_.events(), params_.beta, std::nextafter(t_n_, std::numeric_limits<double>::infinity()));
}

double SthpModel::temporal_intensity(double t) const {
  // Every history event is at or before t_n <= t; the one at t_n counts.
  return params_.mu + params_.alpha * excitation_at_tn_ * std::exp(-params_.beta * (t - t_n_));
}

double SthpModel::compensator(double t) const {
  const double dt = t - t_n_;
  return params_.mu * dt + params_.alpha / params_.beta * excitation_at_tn_ * -std::expm1(-params_.beta * dt);
}

double SthpModel::intensity(const Vec2& s, double t) const {
  double lam = params_.mu * g0_.pdf(s);
  for (auto it = history_.events().rbegin(); it != history_.events().rend(); ++it) {
    const double x = params_.beta * (t - it->t);
    if (x > kUnderflow) break;
    lam += params_.alpha * std::exp(-x) * g2_.pdf_offset(s - it->s);
  }
  return lam;
}

Vec2 SthpModel::spatial_moment(double t) const {
  Vec2 m = params_.mu * params_.s_mu;
  for (auto it = history_.events().rbegin(); it != history_.events().rend(); ++it) {
    const double x = params_.beta * (t - it->t);
    if (x > kUnderflow) break;
    m += params_.alpha * std::exp(-x) * it->s;
  }
  return m;
}

// ---------------------------------------------------------------- StscModel

namespace {

struct StscGrid {
  std::vector<Vec2> centres;
  double cell_area;
};

StscGrid make_grid(const SpatialRegion& region, const GridSpec& grid) {
  if (grid.nx < 2 || grid.ny < 2) throw ValidationError("STSC grid needs at least 2x2 cells");
  StscGrid g;
  const Vec2 span = region.hi() - region.lo();
  const double dx = span.x() / static_cast<double>(grid.nx);
  const double dy = span.y() / static_cast<double>(grid.ny);
  g.cell_area = dx * dy;
  g.centres.reserve(grid.nx * grid.ny);
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t j = 0; j < grid.ny; ++j) {
      g.centres.emplace_back(region.lo().x() + (static_cast<double>(i) + 0.5) * dx,
                             region.lo().y() + (static_cast<double>(j) + 0.5) * dy);
    }
  }
  return g;
}

// mu exp(c beta tau) integrated over [t0, t1], times exp(-sup).
double stsc_cell_integral(double log_base, double rate, double t0, double t1) {
  // rate = g_0(cell) * beta >= 0
  const double x = rate * (t1 - t0);
  if (x < 1e-12) return std::exp(log_base + rate * t0) * (t1 - t0);
  return std::exp(log_base + rate * t0) * std::expm1(x) / rate;
}

}  // namespace

StscModel::StscModel(StscParams params, EventSequence history, GridSpec grid)
    : params_((params.validate(), std::move(params))),
      history_(std::move(history)),
      grid_(grid),
      g0_density_(Gauss2<double>(params_.g0_mean, params_.cov_g0), params_.region) {
  t_n_ = history_.empty() ? history_.t_end() : history_.back().t;
  StscGrid g = make_grid(params_.region, grid_);
  centres_ = std::move(g.centres);
  cell_area_ = g.cell_area;
  const Gauss2<double> g2(Vec2::Zero(), params_.cov_g2);
  g0_.resize(centres_.size());
  log_base_.assign(centres_.size(), std::log(params_.mu));
  for (std::size_t c = 0; c < centres_.size(); ++c) g0_[c] = g0_density_.pdf(centres_[c]);
  kernels_.reserve(history_.size());
  for (const auto& e : history_.events()) {
    const TruncatedGauss2& k = kernels_.emplace_back(g2.recentred(e.s), params_.region);
    for (std::size_t c = 0; c < centres_.size(); ++c) log_base_[c] -= params_.alpha * k.pdf(centres_[c]);
  }
}

double StscModel::temporal_intensity(double t) const {
  double acc = 0.0;
  for (std::size_t c = 0; c < centres_.size(); ++c) acc += std::exp(log_base_[c] + g0_[c] * params_.beta * t);
  return acc * cell_area_;
}

double StscModel::compensator(double t) const {
  double acc = 0.0;
  for (std::size_t c = 0; c < centres_.size(); ++c) {
    acc += stsc_cell_integral(log_base_[c], g0_[c] * params_.beta, t_n_, t);
  }
  return acc * cell_area_;
}

double StscModel::intensity(const Vec2& s, double t) const {
  double sup = 0.0;
  for (const auto& k : kernels_) sup += params_.alpha * k.pdf(s);
  return params_.mu * std::exp(g0_density_.pdf(s) * params_.beta * t - sup);
}

Vec2 StscModel::spatial_moment(double t) const {
  Vec2 m = Vec2::Zero();
  for (std::size_t c = 0; c < centres_.size(); ++c) m += std::exp(log_base_[c] + g0_[c] * params_.beta * t) * centres_[c];
  return m * cell_area_;
}

// ---------------------------------------------------------------- likelihoods

double sthp_compensator(const SthpParams& p, const EventSequence& seq, double horizon) {
  double acc = p.mu * horizon;
  for (const auto& e : seq.events()) {
    if (e.t > horizon) break;
    acc -= p.alpha / p.beta * std::expm1(-p.beta * (horizon - e.t));
  }
  return acc;
}

double sthp_loglik(const SthpParams& p, const EventSequence& seq, const LoglikOptions& opts, std::string* diagnostic) {
  p.validate();
  const double horizon = horizon_of(seq, opts);
  const Gauss2<double> g0(p.s_mu, p.cov_g0);
  const Gauss2<double> g2(Vec2::Zero(), p.cov_g2);
  const auto& ev = seq.events();
  double ll = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    double lam = p.mu * g0.pdf(ev[i].s);
    for (std::size_t j = i; j-- > 0;) {
      const double x = p.beta * (ev[i].t - ev[j].t);
      if (x > kUnderflow) break;
      lam += p.alpha * std::exp(-x) * g2.pdf_offset(ev[i].s - ev[j].s);
    }
    if (!(lam > 0.0)) {
      if (diagnostic) *diagnostic = "intensity is zero at event " + std::to_string(i);
      return -std::numeric_limits<double>::infinity();
    }
    ll += std::log(lam);
  }
  return ll - sthp_compensator(p, seq, horizon);
}

Eigen::VectorXd sthp_pack(const SthpParams& p) {
  Eigen::VectorXd th(9);
  th[0] = std::log(p.mu);
  th[1] = std::log(p.alpha);
  th[2] = std::log(p.beta);
  cholesky_into(p.cov_g0, th.data() + 3);
  cholesky_into(p.cov_g2, th.data() + 6);
  return th;
}

SthpParams sthp_unpack(const Eigen::VectorXd& th, const Vec2& s_mu) {
  if (th.size() != 9) throw ValidationError("sthp_unpack expects 9 coordinates");
  SthpParams p;
  p.mu = std::exp(th[0]);
  p.alpha = std::exp(th[1]);
  p.beta = std::exp(th[2]);
  p.s_mu = s_mu;
  p.cov_g0 = cholesky_from(th.data() + 3);
  p.cov_g2 = cholesky_from(th.data() + 6);
  return p;
}

double sthp_loglik_grad(const SthpParams& p, const EventSequence& seq, Eigen::VectorXd* grad,
                        const LoglikOptions& opts) {
  p.validate();
  const double horizon = horizon_of(seq, opts);
  const auto& ev = seq.events();
  const Mat2 prec0 = p.cov_g0.inverse();
  const Mat2 prec2 = p.cov_g2.inverse();
  const double lognorm0 = -kLog2Pi - 0.5 * std::log(p.cov_g0.determinant());
  const double lognorm2 = -kLog2Pi - 0.5 * std::log(p.cov_g2.determinant());

  double ll = 0.0;
  double d_mu = 0.0, d_alpha = 0.0, d_beta = 0.0;
  Mat2 w0 = Mat2::Zero();   // sum_i (mu g0_i / lam_i) d d^T
  double w0s = 0.0;         // sum_i  mu g0_i / lam_i
  Mat2 w2 = Mat2::Zero();   // sum_i sum_j (alpha e h / lam_i) d d^T
  double w2s = 0.0;         // sum_i sum_j  alpha e h / lam_i

  for (std::size_t i = 0; i < ev.size(); ++i) {
    const Vec2 d0 = ev[i].s - p.s_mu;
    const double g0 = std::exp(lognorm0 - 0.5 * d0.dot(prec0 * d0));
    double sum_eh = 0.0, sum_deh = 0.0;
    Mat2 m2 = Mat2::Zero();
    for (std::size_t j = i; j-- > 0;) {
      const double dt = ev[i].t - ev[j].t;
      const double x = p.beta * dt;
      if (x > kUnderflow) break;
      const Vec2 d = ev[i].s - ev[j].s;
      const double eh = std::exp(-x + lognorm2 - 0.5 * d.dot(prec2 * d));
      sum_eh += eh;
      sum_deh += dt * eh;
      m2.noalias() += eh * (d * d.transpose());
    }
    const double lam = p.mu * g0 + p.alpha * sum_eh;
    if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += std::log(lam);
    const double inv = 1.0 / lam;
    d_mu += g0 * inv;
    d_alpha += sum_eh * inv;
    d_beta -= p.alpha * sum_deh * inv;
    w0.noalias() += (p.mu * g0 * inv) * (d0 * d0.transpose());
    w0s += p.mu * g0 * inv;
    w2.noalias() += (p.alpha * inv) * m2;
    w2s += p.alpha * sum_eh * inv;
  }

  // Compensator mu T - (alpha/beta) sum_i (exp(-beta (T - t_i)) - 1).
  double sum_em1 = 0.0, sum_te = 0.0;
  for (const auto& e : ev) {
    const double dt = horizon - e.t;
    sum_em1 += std::expm1(-p.beta * dt);
    sum_te += dt * std::exp(-p.beta * dt);
  }
  ll += -p.mu * horizon + p.alpha / p.beta * sum_em1;

  if (grad) {
    d_mu -= horizon;
    d_alpha += sum_em1 / p.beta;
    d_beta += -p.alpha / (p.beta * p.beta) * sum_em1 - p.alpha / p.beta * sum_te;
    // d log g / d Sigma = (P d d^T P - P) / 2
    const Mat2 g_cov0 = 0.5 * (prec0 * w0 * prec0 - w0s * prec0);
    const Mat2 g_cov2 = 0.5 * (prec2 * w2 * prec2 - w2s * prec2);
    grad->resize(9);
    (*grad)[0] = d_mu * p.mu;
    (*grad)[1] = d_alpha * p.alpha;
    (*grad)[2] = d_beta * p.beta;
    cholesky_chain(g_cov0, p.cov_g0, grad->data() + 3);
    cholesky_chain(g_cov2, p.cov_g2, grad->data() + 6);
  }
  return ll;
}

double stsc_compensator(const StscParams& p, const EventSequence& seq, double horizon, const GridSpec& grid) {
  p.validate();
  const StscGrid g = make_grid(p.region, grid);
  const TruncatedGauss2 g0(Gauss2<double>(p.g0_mean, p.cov_g0), p.region);
  const Gauss2<double> g2(Vec2::Zero(), p.cov_g2);
  const std::size_t nc = g.centres.size();
  std::vector<double> rate(nc), log_base(nc, std::log(p.mu));
  for (std::size_t c = 0; c < nc; ++c) rate[c] = g0.pdf(g.centres[c]) * p.beta;

  double acc = 0.0;
  double t_prev = 0.0;
  for (const auto& e : seq.events()) {
    if (e.t > horizon) break;
    for (std::size_t c = 0; c < nc; ++c) acc += stsc_cell_integral(log_base[c], rate[c], t_prev, e.t);
    const TruncatedGauss2 k(g2.recentred(e.s), p.region);
    for (std::size_t c = 0; c < nc; ++c) log_base[c] -= p.alpha * k.pdf(g.centres[c]);
    t_prev = e.t;
  }
  if (horizon > t_prev) {
    for (std::size_t c = 0; c < nc; ++c) acc += stsc_cell_integral(log_base[c], rate[c], t_prev, horizon);
  }
  return acc * g.cell_area;
}

double stsc_loglik(const StscParams& p, const EventSequence& seq, const GridSpec& grid, const LoglikOptions& opts) {
  p.validate();
  const double horizon = horizon_of(seq, opts);
  const TruncatedGauss2 g0(Gauss2<double>(p.g0_mean, p.cov_g0), p.region);
  const Gauss2<double> g2(Vec2::Zero(), p.cov_g2);
  std::vector<TruncatedGauss2> kernels;
  kernels.reserve(seq.size());
  double ll = 0.0;
  for (const auto& e : seq.events()) {
    if (!p.region.contains(e.s)) return -std::numeric_limits<double>::infinity();
    double sup = 0.0;
    for (const auto& k : kernels) sup += p.alpha * k.pdf(e.s);
    ll += std::log(p.mu) + g0.pdf(e.s) * p.beta * e.t - sup;
    kernels.emplace_back(g2.recentred(e.s), p.region);
  }
  const double comp = stsc_compensator(p, seq, horizon, grid);
  if (!std::isfinite(comp)) throw NumericError("stsc_loglik: compensator is not finite");
  return ll - comp;
}

// ---------------------------------------------------------------- fitting

SthpParams sthp_default_init(const EventSequence& seq) {
  if (seq.size() < 3) throw ValidationError("need at least 3 events to initialize an STHP fit");
  Vec2 mean = Vec2::Zero();
  for (const auto& e : seq.events()) mean += e.s;
  mean /= static_cast<double>(seq.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& e : seq.events()) cov += (e.s - mean) * (e.s - mean).transpose();
  cov /= static_cast<double>(seq.size() - 1);
  cov += Mat2::Identity() * 1e-6;
  const double span = std::max(seq.back().t, 1e-12);
  SthpParams p;
  p.mu = 0.5 * static_cast<double>(seq.size()) / span;
  p.alpha = 0.5;
  p.beta = 2.0;
  p.s_mu = mean;
  p.cov_g0 = cov;
  p.cov_g2 = cov * 0.25;
  return p;
}

SthpFit fit_sthp_mle(const EventSequence& seq, const SthpParams& init, const FitOptions& opts) {
  init.validate();
  if (seq.empty()) throw ValidationError("fit_sthp_mle: empty sequence");
  Vec2 s_mu = Vec2::Zero();
  for (const auto& e : seq.events()) s_mu += e.s;
  s_mu /= static_cast<double>(seq.size());
  SthpParams start = init;
  start.s_mu = s_mu;

  // Minimize the per-event negative log-likelihood so the gradient tolerance
  // does not scale with the sequence length.
  const double scale = 1.0 / static_cast<double>(seq.size());
  optim::Objective objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
    if (!th.allFinite() || th.cwiseAbs().maxCoeff() > 50.0) return std::numeric_limits<double>::infinity();
    const SthpParams p = sthp_unpack(th, s_mu);
    try {
      p.validate();
    } catch (const ValidationError&) {
      return std::numeric_limits<double>::infinity();
    }
    const double ll = sthp_loglik_grad(p, seq, g, opts.loglik);
    if (g) *g *= -scale;
    return -ll * scale;
  };
  const Eigen::VectorXd th0 = sthp_pack(start);
  {
    Eigen::VectorXd g;
    if (!std::isfinite(objective(th0, &g))) throw NumericError("fit_sthp_mle: log-likelihood is not finite at the initial parameters");
  }
  const optim::BfgsResult r = optim::minimize_bfgs(objective, th0, {.grad_tol = opts.grad_tol, .max_iter = opts.max_iter});
  SthpFit fit;
  fit.params = sthp_unpack(r.x, s_mu);
  fit.loglik = -r.f / scale;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  for (const auto& row : r.trace) fit.trace.push_back({row.iteration, -row.f / scale, row.grad_norm, row.step});
  return fit;
}

StscFit fit_stsc_mle(const EventSequence& seq, const StscParams& init, const GridSpec& grid, const FitOptions& opts) {
  init.validate();
  if (seq.empty()) throw ValidationError("fit_stsc_mle: empty sequence");
  if (init.cov_g0(0, 1) != 0.0 || init.cov_g2(0, 1) != 0.0) {
    throw ValidationError("fit_stsc_mle supports diagonal covariances only");
  }
  auto unpack = [&](const Eigen::VectorXd& th) {
    StscParams p = init;
    p.mu = std::exp(th[0]);
    p.alpha = std::exp(th[1]);
    p.beta = std::exp(th[2]);
    p.cov_g0 = Eigen::Vector2d(std::exp(th[3]), std::exp(th[4])).asDiagonal();
    p.cov_g2 = Eigen::Vector2d(std::exp(th[5]), std::exp(th[6])).asDiagonal();
    return p;
  };
  Eigen::VectorXd th0(7);
  th0 << std::log(init.mu), std::log(init.alpha), std::log(init.beta), std::log(init.cov_g0(0, 0)),
      std::log(init.cov_g0(1, 1)), std::log(init.cov_g2(0, 0)), std::log(init.cov_g2(1, 1));
  const double scale = 1.0 / static_cast<double>(seq.size());
  auto value = [&](const Eigen::VectorXd& th) {
    if (!th.allFinite() || th.cwiseAbs().maxCoeff() > 30.0) return std::numeric_limits<double>::infinity();
    try {
      return -stsc_loglik(unpack(th), seq, grid, opts.loglik) * scale;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  optim::Objective objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
    const double f = value(th);
    if (g && std::isfinite(f)) *g = optim::numeric_gradient(value, th, 1e-5);
    return f;
  };
  if (!std::isfinite(value(th0))) throw NumericError("fit_stsc_mle: log-likelihood is not finite at the initial parameters");
  const auto r = optim::minimize_bfgs(objective, th0, {.grad_tol = opts.grad_tol, .max_iter = opts.max_iter});
  StscFit fit;
  fit.params = unpack(r.x);
  fit.loglik = -r.f / scale;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  for (const auto& row : r.trace) fit.trace.push_back({row.iteration, -row.f / scale, row.grad_norm, row.step});
  return fit;
}

}  // namespace stpp
