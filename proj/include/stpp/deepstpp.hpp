#ifndef STPP_DEEPSTPP_HPP
#define STPP_DEEPSTPP_HPP

#include "stpp/core.hpp"
#include "stpp/model.hpp"
#include "stpp/nn.hpp"
#include "stpp/rng.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace stpp::deep {

struct DeepStppConfig {
  Eigen::Index d_model = 128;
  int layers = 3;
  int heads = 2;
  Eigen::Index d_hidden = 128;
  Eigen::Index d_z = 128;
  Eigen::Index dec_hidden = 128;
  int dec_layers = 2;  // hidden layers per decoder
  Eigen::Index J = 50;
  Eigen::Index max_history = 64;
  double pos_scale = 100.0;
  double kl_weight = 1e-3;
  double lr = 0.01;
  int epochs = 200;
  int batch_size = 128;
  // Rescales each batch gradient to this global norm when it is larger; 0 disables.
  double grad_clip = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Small desk configuration: d_model 32, d_z 16, J 20.
  static DeepStppConfig small();
  nlohmann::json to_json() const;
  static DeepStppConfig from_json(const nlohmann::json& j);
};

struct LatentDist {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
};

// Per-anchor kernel parameters; anchors are the window's events (most recent
// first) followed by the representative points.
struct KernelParams {
  Eigen::VectorXd w;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  std::vector<Event> anchors;

  std::size_t size() const { return anchors.size(); }
  void validate() const;
};

struct RepresentativePoints {
  std::vector<Vec2> locations;
  std::vector<double> times;
};

// J locations uniform on `region`, all at time t_n.
RepresentativePoints sample_representative_points(Eigen::Index J, const SpatialRegion& region, double t_n, Rng& rng);

// lambda*(s, t) = sum_i w_i rbf_spatial(s, s_i; gamma_i) exp_temporal(t, t_i; beta_i).
double intensity(const KernelParams& kp, const Vec2& s, double t);
// Spatial marginal on the plane: sum_i w_i exp_temporal(t, t_i; beta_i).
double temporal_intensity(const KernelParams& kp, double t);
// Integral of the temporal intensity over [t_n, t], closed form.
double temporal_compensator(const KernelParams& kp, double t_n, double t);
// f*(s, t) = lambda*(s, t) exp(-compensator).
double conditional_pdf(const KernelParams& kp, double t_n, const Vec2& s, double t);
// sum_i w_i k_t(t, t_i) s_i.
Vec2 spatial_moment(const KernelParams& kp, double t);

// Frozen DeepSTPP intensity for one window.
class DeepStppModel final : public SpatioTemporalModel {
 public:
  DeepStppModel(KernelParams kp, double t_n);
  double last_time() const override { return t_n_; }
  double temporal_intensity(double t) const override { return deep::temporal_intensity(kp_, t); }
  double compensator(double t) const override { return temporal_compensator(kp_, t_n_, t); }
  double intensity(const Vec2& s, double t) const override { return deep::intensity(kp_, s, t); }
  Vec2 spatial_moment(double t) const override { return deep::spatial_moment(kp_, t); }
  const KernelParams& kernel_params() const { return kp_; }

 private:
  KernelParams kp_;
  double t_n_;
};

struct LossComponents {
  double loss = 0.0;
  double loglik = 0.0;
  double kl = 0.0;
  bool clamped = false;
};

struct Prediction {
  double t = 0.0;
  Vec2 s = Vec2::Zero();
};

class DeepStpp {
 public:
  // Weights are initialized from cfg.seed. `rep_region` is where the
  // representative points are drawn (inflated bounding box of training data).
  DeepStpp(DeepStppConfig cfg, SpatialRegion rep_region);

  const DeepStppConfig& config() const { return cfg_; }
  const SpatialRegion& rep_region() const { return rep_region_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  struct LatentTensors {
    nn::Tensor mean;     // 1 x d_z
    nn::Tensor log_std;  // 1 x d_z
  };
  struct KernelTensors {
    nn::Tensor w, gamma, beta;  // 1 x (n + J)
  };

  // The last max_history events of the window.
  std::vector<Event> truncate(const EventSequence& window) const;

  LatentTensors encode(nn::Tape& tape, const EventSequence& window) const;
  LatentDist encode(const EventSequence& window) const;
  // z = mean + exp(log_std) * eps on the tape.
  nn::Tensor sample_latent(nn::Tape& tape, const LatentTensors& dist, Rng& rng) const;
  Eigen::VectorXd sample_latent(const LatentDist& dist, Rng& rng) const;
  KernelTensors decode(nn::Tape& tape, const nn::Tensor& z, Eigen::Index n) const;
  KernelParams decode(const Eigen::VectorXd& z, const EventSequence& window, const RepresentativePoints& rep) const;

  // -loglik + kl_weight * KL for one (window, target) pair on the tape.
  nn::Tensor elbo_loss(nn::Tape& tape, const EventSequence& window, const Event& target, Rng& rng,
                       LossComponents* parts = nullptr) const;
  LossComponents elbo_loss(const EventSequence& window, const Event& target, Rng& rng) const;

  // Kernel parameters at the latent mean (n_samples == 0) or averaged over
  // n_samples draws of z.
  KernelParams kernel_params(const EventSequence& window, Rng& rng, int n_samples = 0) const;
  DeepStppModel conditional_model(const EventSequence& window, Rng& rng, int n_samples = 0) const;
  Prediction predict_event(const EventSequence& window, Rng& rng, int n_samples = 0) const;

  void save(const std::filesystem::path& stem) const;
  static DeepStpp load(const std::filesystem::path& stem);

 private:
  DeepStppConfig cfg_;
  SpatialRegion rep_region_;
  nn::ParameterSet params_;
  nn::Linear embed_;
  nn::AttentionEncoder encoder_;
  nn::Linear mean_head_, log_std_head_;
  nn::Mlp dec_w_, dec_gamma_, dec_beta_;
};

struct TrainTraceRow {
  int epoch;
  double train_loss;
  double val_loss;
  double train_loglik;
  double train_kl;
};

struct TrainResult {
  std::vector<TrainTraceRow> trace;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t clamp_warnings = 0;
};

struct TrainOptions {
  // Called after each epoch; a false return stops training.
  std::function<bool(const TrainTraceRow&)> on_epoch;
  // Restore the best-validation weights at the end.
  bool keep_best = true;
};

// Mini-batch Adam over the ELBO. Deterministic given cfg.seed.
TrainResult train(DeepStpp& model, const std::vector<WindowPair>& train_set, const std::vector<WindowPair>& val_set,
                  const TrainOptions& opts = {});

// Mean loss over `set`, with latent noise drawn from a stream fixed per
// window so that successive calls are comparable.
double mean_loss(const DeepStpp& model, const std::vector<WindowPair>& set, std::uint64_t seed);

}  // namespace stpp::deep

#endif  // STPP_DEEPSTPP_HPP
