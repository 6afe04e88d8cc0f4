#ifndef STPP_PARAMETRIC_HPP
#define STPP_PARAMETRIC_HPP

#include "stpp/core.hpp"
#include "stpp/kernels.hpp"
#include "stpp/model.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace stpp {

// Spatiotemporal Hawkes process with Gaussian background g_0 and Gaussian
// triggering kernel g_2 on the plane:
//   lambda*(s, t) = mu g_0(s) + sum_{t_i < t} alpha exp(-beta (t - t_i)) g_2(s - s_i).
struct SthpParams {
  double mu = 0.2;
  double alpha = 0.5;
  double beta = 1.0;
  Vec2 s_mu = Vec2::Zero();
  Mat2 cov_g0 = Mat2::Identity() * 0.2;
  Mat2 cov_g2 = Mat2::Identity() * 0.5;

  void validate() const;
  double branching_ratio() const { return alpha / beta; }
  double stationary_rate() const { return mu / (1.0 - branching_ratio()); }

  // ds1, ds2, ds3 synthetic settings.
  static SthpParams preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

// Spatiotemporal self-correcting process on a rectangle:
//   lambda*(s, t) = mu exp(g_0(s) beta t - sum_{t_i < t} alpha g_2(s, s_i)),
// both Gaussians renormalized to the region.
struct StscParams {
  double mu = 1.0;
  double alpha = 0.2;
  double beta = 0.2;
  Vec2 g0_mean = Vec2(0.5, 0.5);
  Mat2 cov_g0 = Mat2::Identity();
  Mat2 cov_g2 = Mat2::Identity() * 0.85;
  SpatialRegion region = SpatialRegion::unit_square();

  void validate() const;
  static StscParams preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

nlohmann::json to_json(const SthpParams& p);
SthpParams sthp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StscParams& p);
StscParams stsc_from_json(const nlohmann::json& j);

double sthp_intensity(const SthpParams& p, std::span<const Event> history, const Vec2& s, double t);
double sthp_temporal_intensity(const SthpParams& p, std::span<const Event> history, double t);
double stsc_intensity(const StscParams& p, std::span<const Event> history, const Vec2& s, double t);

// STHP conditioned on a history. Also the ground-truth model for evaluation.
class SthpModel final : public SpatioTemporalModel {
 public:
  // Conditions on every event of `history`; t_n is its last event time
  // (history.t_end() if it is empty).
  SthpModel(SthpParams params, EventSequence history);

  double last_time() const override { return t_n_; }
  double temporal_intensity(double t) const override;
  double compensator(double t) const override;
  double intensity(const Vec2& s, double t) const override;
  Vec2 spatial_moment(double t) const override;

  const SthpParams& params() const { return params_; }
  const EventSequence& history() const { return history_; }

 private:
  SthpParams params_;
  EventSequence history_;
  Gauss2<double> g0_;
  Gauss2<double> g2_;
  double t_n_;
  double excitation_at_tn_;  // sum_j exp(-beta (t_n - t_j))
};

// Grid discretization used for the STSC temporal marginal and compensator.
struct GridSpec {
  std::size_t nx = 101;
  std::size_t ny = 101;
};

// STSC conditioned on a history; spatial integrals use cell-centre sums.
class StscModel final : public SpatioTemporalModel {
 public:
  StscModel(StscParams params, EventSequence history, GridSpec grid = {});

  double last_time() const override { return t_n_; }
  double temporal_intensity(double t) const override;
  double compensator(double t) const override;
  double intensity(const Vec2& s, double t) const override;
  Vec2 spatial_moment(double t) const override;

 private:
  StscParams params_;
  EventSequence history_;
  GridSpec grid_;
  double t_n_;
  double cell_area_;
  std::vector<Vec2> centres_;
  TruncatedGauss2 g0_density_;
  std::vector<TruncatedGauss2> kernels_;  // g_2 centred at each history event
  std::vector<double> g0_;                // g_0 at each cell centre
  std::vector<double> log_base_;          // log mu - alpha sum g_2 at each centre
};

struct LoglikOptions {
  // Observation horizon; defaults to the last event time t_n.
  std::optional<double> horizon;
};

// Closed-form compensator; returns -inf (and sets *diagnostic) when some
// lambda*(s_i, t_i) <= 0.
double sthp_loglik(const SthpParams& p, const EventSequence& seq, const LoglikOptions& opts = {},
                   std::string* diagnostic = nullptr);

// Compensator of the STHP on [0, T] by the closed form.
double sthp_compensator(const SthpParams& p, const EventSequence& seq, double horizon);

// Time integral is exact per inter-event interval; the spatial integral is a
// cell-centre sum on `grid`.
double stsc_loglik(const StscParams& p, const EventSequence& seq, const GridSpec& grid = {},
                   const LoglikOptions& opts = {});
double stsc_compensator(const StscParams& p, const EventSequence& seq, double horizon, const GridSpec& grid = {});

// Unconstrained coordinates for STHP fitting: log mu, log alpha, log beta and
// log-Cholesky factors (log L00, L10, log L11) of both covariances.
Eigen::VectorXd sthp_pack(const SthpParams& p);
SthpParams sthp_unpack(const Eigen::VectorXd& theta, const Vec2& s_mu);

// Log-likelihood and its exact gradient with respect to sthp_pack coordinates.
double sthp_loglik_grad(const SthpParams& p, const EventSequence& seq, Eigen::VectorXd* grad,
                        const LoglikOptions& opts = {});

struct FitOptions {
  double grad_tol = 1e-6;
  int max_iter = 500;
  LoglikOptions loglik;
};

struct FitTraceRow {
  int iteration;
  double loglik;
  double grad_norm;
  double step;
};

struct SthpFit {
  SthpParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<FitTraceRow> trace;
};

// BFGS maximum likelihood with s_mu fixed to the mean event location.
SthpFit fit_sthp_mle(const EventSequence& seq, const SthpParams& init, const FitOptions& opts = {});

// A data-driven starting point: rate from the count, covariances from the
// sample covariance.
SthpParams sthp_default_init(const EventSequence& seq);

struct StscFit {
  StscParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<FitTraceRow> trace;
};

// Experimental: BFGS on log mu, log alpha, log beta and log diagonal
// variances with central-difference gradients; means and region are fixed.
StscFit fit_stsc_mle(const EventSequence& seq, const StscParams& init, const GridSpec& grid = {41, 41},
                     const FitOptions& opts = {});

}  // namespace stpp

#endif  // STPP_PARAMETRIC_HPP
