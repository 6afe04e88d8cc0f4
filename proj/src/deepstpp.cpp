#include "stpp/deepstpp.hpp"

#include "stpp/io.hpp"
#include "stpp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stpp::deep {
namespace {

using nn::Mat;
using nn::Tape;
using nn::Tensor;

constexpr double kIntensityFloor = 1e-30;

double exprel_neg(double x) { return x == 0.0 ? 1.0 : -std::expm1(-x) / x; }

void require_positive(const char* name, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("deepstpp config: ") + name + " must be positive");
}

Mat row(const std::vector<double>& v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

Eigen::VectorXd to_vec(const Mat& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

nlohmann::json region_json(const SpatialRegion& r) {
  return {r.lo().x(), r.lo().y(), r.hi().x(), r.hi().y()};
}

}  // namespace

// ---------------------------------------------------------------- config

void DeepStppConfig::validate() const {
  if (d_model <= 0 || d_model % 2 != 0) throw ValidationError("deepstpp config: d_model must be positive and even");
  if (layers < 0 || heads <= 0 || d_hidden <= 0 || d_z <= 0 || dec_hidden <= 0 || dec_layers < 0 || J < 0 ||
      max_history <= 0 || epochs < 0 || batch_size <= 0) {
    throw ValidationError("deepstpp config: sizes must be positive");
  }
  if (d_model % heads != 0) throw ValidationError("deepstpp config: d_model must be divisible by heads");
  require_positive("pos_scale", pos_scale);
  if (!(kl_weight >= 0.0)) throw ValidationError("deepstpp config: kl_weight must be non-negative");
  if (!(grad_clip >= 0.0)) throw ValidationError("deepstpp config: grad_clip must be non-negative");
  if (!(lr >= 0.0)) throw ValidationError("deepstpp config: lr must be non-negative");
}

DeepStppConfig DeepStppConfig::small() {
  DeepStppConfig c;
  c.d_model = 32;
  c.d_z = 16;
  c.J = 20;
  return c;
}

nlohmann::json DeepStppConfig::to_json() const {
  return {{"d_model", d_model},       {"layers", layers},         {"heads", heads},   {"d_hidden", d_hidden},
          {"d_z", d_z},               {"dec_hidden", dec_hidden}, {"dec_layers", dec_layers},
          {"J", J},                   {"max_history", max_history}, {"pos_scale", pos_scale},
          {"kl_weight", kl_weight},   {"lr", lr},                 {"epochs", epochs}, {"batch_size", batch_size}, {"grad_clip", grad_clip},
          {"seed", seed}};
}

DeepStppConfig DeepStppConfig::from_json(const nlohmann::json& j) {
  DeepStppConfig c;
  c.d_model = j.at("d_model").get<Eigen::Index>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_hidden = j.at("d_hidden").get<Eigen::Index>();
  c.d_z = j.at("d_z").get<Eigen::Index>();
  c.dec_hidden = j.at("dec_hidden").get<Eigen::Index>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.J = j.at("J").get<Eigen::Index>();
  c.max_history = j.at("max_history").get<Eigen::Index>();
  c.pos_scale = j.at("pos_scale").get<double>();
  c.kl_weight = j.at("kl_weight").get<double>();
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------- closed forms

void KernelParams::validate() const {
  const auto n = static_cast<Eigen::Index>(anchors.size());
  if (w.size() != n || gamma.size() != n || beta.size() != n) {
    throw ValidationError("kernel params: w, gamma, beta and anchors differ in length");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ValidationError("kernel params: w must be finite and >= 0", i);
    if (!(gamma[i] > 0.0) || !std::isfinite(gamma[i])) throw ValidationError("kernel params: gamma must be > 0", i);
    if (!std::isfinite(beta[i])) throw ValidationError("kernel params: beta must be finite", i);
  }
}

RepresentativePoints sample_representative_points(Eigen::Index J, const SpatialRegion& region, double t_n, Rng& rng) {
  if (!region.bounded()) throw ValidationError("representative points need a rectangular region");
  RepresentativePoints rp;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double x = rng.uniform(region.lo().x(), region.hi().x());
    const double y = rng.uniform(region.lo().y(), region.hi().y());
    rp.locations.emplace_back(x, y);
    rp.times.push_back(t_n);
  }
  return rp;
}

double intensity(const KernelParams& kp, const Vec2& s, double t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kp.anchors.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    acc += kp.w[k] * rbf_spatial(s, kp.anchors[i].s, kp.gamma[k]) * exp_temporal(t, kp.anchors[i].t, kp.beta[k]);
  }
  return acc;
}

double temporal_intensity(const KernelParams& kp, double t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kp.anchors.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    acc += kp.w[k] * exp_temporal(t, kp.anchors[i].t, kp.beta[k]);
  }
  return acc;
}

double temporal_compensator(const KernelParams& kp, double t_n, double t) {
  if (t < t_n) throw ValidationError("temporal compensator needs t >= t_n");
  const double delta = t - t_n;
  double acc = 0.0;
  for (std::size_t i = 0; i < kp.anchors.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double b = kp.beta[k];
    const double kn = exp_temporal(t_n, kp.anchors[i].t, b);
    if (std::abs(b) < 1e-8) {
      acc += kp.w[k] * kn * delta;
    } else {
      // (w / beta)(k_t(t_n) - k_t(t)) = w k_t(t_n) delta (1 - e^{-beta delta}) / (beta delta)
      acc += kp.w[k] * kn * delta * exprel_neg(b * delta);
    }
  }
  return acc;
}

double conditional_pdf(const KernelParams& kp, double t_n, const Vec2& s, double t) {
  return intensity(kp, s, t) * std::exp(-temporal_compensator(kp, t_n, t));
}

Vec2 spatial_moment(const KernelParams& kp, double t) {
  Vec2 acc = Vec2::Zero();
  for (std::size_t i = 0; i < kp.anchors.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    acc += kp.w[k] * exp_temporal(t, kp.anchors[i].t, kp.beta[k]) * kp.anchors[i].s;
  }
  return acc;
}

DeepStppModel::DeepStppModel(KernelParams kp, double t_n) : kp_(std::move(kp)), t_n_(t_n) {
  kp_.validate();
  for (const Event& a : kp_.anchors) {
    if (a.t > t_n_) throw ValidationError("kernel anchors must not lie after t_n");
  }
}

// ---------------------------------------------------------------- network

DeepStpp::DeepStpp(DeepStppConfig cfg, SpatialRegion rep_region)
    : cfg_((cfg.validate(), std::move(cfg))), rep_region_(std::move(rep_region)) {
  if (!rep_region_.bounded()) throw ValidationError("representative-point region must be a rectangle");
  Rng rng = Rng(cfg_.seed).stream("init");
  const Eigen::Index slots = cfg_.max_history + cfg_.J;
  embed_ = nn::Linear(params_, "embed", 3, cfg_.d_model, rng);
  encoder_ = nn::AttentionEncoder(params_, "encoder", {cfg_.d_model, cfg_.layers, cfg_.heads, cfg_.d_hidden}, rng);
  mean_head_ = nn::Linear(params_, "latent.mean", cfg_.d_model, cfg_.d_z, rng);
  log_std_head_ = nn::Linear(params_, "latent.log_std", cfg_.d_model, cfg_.d_z, rng);
  dec_w_ = nn::Mlp(params_, "dec_w", cfg_.d_z, cfg_.dec_hidden, cfg_.dec_layers, slots, rng);
  dec_gamma_ = nn::Mlp(params_, "dec_gamma", cfg_.d_z, cfg_.dec_hidden, cfg_.dec_layers, slots, rng);
  dec_beta_ = nn::Mlp(params_, "dec_beta", cfg_.d_z, cfg_.dec_hidden, cfg_.dec_layers, slots, rng);
}

std::vector<Event> DeepStpp::truncate(const EventSequence& window) const {
  const auto& ev = window.events();
  if (ev.empty()) throw ValidationError("deepstpp: empty window");
  const auto keep = std::min<std::size_t>(ev.size(), static_cast<std::size_t>(cfg_.max_history));
  return {ev.end() - static_cast<std::ptrdiff_t>(keep), ev.end()};
}

DeepStpp::LatentTensors DeepStpp::encode(Tape& tape, const EventSequence& window) const {
  const std::vector<Event> ev = truncate(window);
  const auto n = static_cast<Eigen::Index>(ev.size());
  const double t_n = ev.back().t;
  Mat x(n, 3);
  std::vector<double> times;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Event& e = ev[static_cast<std::size_t>(i)];
    x(i, 0) = e.t - t_n;
    x(i, 1) = e.s.x();
    x(i, 2) = e.s.y();
    times.push_back(e.t);
  }
  const Tensor pe = tape.constant(nn::sinusoidal_positions(times, cfg_.d_model, cfg_.pos_scale));
  const Tensor h = encoder_(tape, nd::add(embed_(tape, tape.constant(std::move(x))), pe));
  const Tensor pooled = nd::mean_rows(h);
  return {mean_head_(tape, pooled), log_std_head_(tape, pooled)};
}

LatentDist DeepStpp::encode(const EventSequence& window) const {
  Tape tape;
  const LatentTensors lt = encode(tape, window);
  return {to_vec(lt.mean.value()), to_vec(lt.log_std.value())};
}

Tensor DeepStpp::sample_latent(Tape& tape, const LatentTensors& dist, Rng& rng) const {
  Mat eps(1, cfg_.d_z);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(0, i) = rng.normal();
  return nd::add(dist.mean, nd::mul(nd::exp(dist.log_std), tape.constant(std::move(eps))));
}

Eigen::VectorXd DeepStpp::sample_latent(const LatentDist& dist, Rng& rng) const {
  Eigen::VectorXd z(dist.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = dist.mean[i] + std::exp(dist.log_std[i]) * rng.normal();
  return z;
}

DeepStpp::KernelTensors DeepStpp::decode(Tape& tape, const Tensor& z, Eigen::Index n) const {
  if (n < 1 || n > cfg_.max_history) throw ValidationError("deepstpp decode: history length out of range");
  auto pick = [&](const Tensor& out) {
    const Tensor hist = nd::slice(out, 0, 1, 0, n);
    if (cfg_.J == 0) return hist;
    return nd::concat({hist, nd::slice(out, 0, 1, cfg_.max_history, cfg_.J)}, nd::Axis::cols);
  };
  KernelTensors kt;
  kt.w = nd::softplus(pick(dec_w_(tape, z)));
  kt.gamma = nd::clamp_min(nd::softplus(pick(dec_gamma_(tape, z))), 1e-6);
  kt.beta = pick(dec_beta_(tape, z));
  return kt;
}

namespace {

std::vector<Event> anchors_for(const std::vector<Event>& history, const RepresentativePoints& rep) {
  std::vector<Event> anchors(history.rbegin(), history.rend());
  for (std::size_t j = 0; j < rep.locations.size(); ++j) anchors.push_back({rep.times[j], rep.locations[j]});
  return anchors;
}

}  // namespace

KernelParams DeepStpp::decode(const Eigen::VectorXd& z, const EventSequence& window,
                              const RepresentativePoints& rep) const {
  if (z.size() != cfg_.d_z) throw nd::ShapeError("deepstpp decode: z has the wrong length");
  if (static_cast<Eigen::Index>(rep.locations.size()) != cfg_.J) {
    throw ValidationError("deepstpp decode: expected " + std::to_string(cfg_.J) + " representative points");
  }
  const std::vector<Event> ev = truncate(window);
  Tape tape;
  const KernelTensors kt = decode(tape, tape.constant(z.transpose()), static_cast<Eigen::Index>(ev.size()));
  KernelParams kp;
  kp.w = to_vec(kt.w.value());
  kp.gamma = to_vec(kt.gamma.value());
  kp.beta = to_vec(kt.beta.value());
  kp.anchors = anchors_for(ev, rep);
  return kp;
}

Tensor DeepStpp::elbo_loss(Tape& tape, const EventSequence& window, const Event& target, Rng& rng,
                           LossComponents* parts) const {
  const std::vector<Event> ev = truncate(window);
  const double t_n = ev.back().t;
  if (target.t < t_n) throw ValidationError("deepstpp loss: target precedes the last window event");
  const auto n = static_cast<Eigen::Index>(ev.size());

  Rng latent_rng = rng.stream("latent");
  Rng rep_rng = rng.stream("rep-points");
  const LatentTensors lt = encode(tape, window);
  const Tensor z = sample_latent(tape, lt, latent_rng);
  const KernelTensors kt = decode(tape, z, n);
  const RepresentativePoints rep = sample_representative_points(cfg_.J, rep_region_, t_n, rep_rng);
  const std::vector<Event> anchors = anchors_for(ev, rep);

  const double delta = target.t - t_n;
  std::vector<double> dist, lag, age;
  for (const Event& a : anchors) {
    dist.push_back((target.s - a.s).norm());
    lag.push_back(target.t - a.t);
    age.push_back(t_n - a.t);
  }

  // log of w_i k_s k_t at the target, per anchor.
  const Tensor log_terms = nd::add_scalar(
      nd::sub(nd::sub(nd::add(nd::log(nd::clamp_min(kt.w, kIntensityFloor)), nd::scale(nd::log(kt.gamma), 2.0)),
                      nd::mul(kt.gamma, tape.constant(row(dist)))),
              nd::mul(kt.beta, tape.constant(row(lag)))),
      -std::log(2.0 * std::numbers::pi));
  Tensor log_lambda = nd::logsumexp(log_terms);
  bool clamped = false;
  if (log_lambda.item() < std::log(kIntensityFloor)) {
    log_lambda = tape.scalar(std::log(kIntensityFloor));
    clamped = true;
  }
  const Tensor decay_tn = nd::exp(nd::neg(nd::mul(kt.beta, tape.constant(row(age)))));
  const Tensor compensator =
      nd::scale(nd::sum(nd::mul(nd::mul(kt.w, decay_tn), nd::exprel_neg(nd::scale(kt.beta, delta)))), delta);
  const Tensor loglik = nd::sub(log_lambda, compensator);

  const Tensor kl = nd::scale(
      nd::sum(nd::add_scalar(nd::sub(nd::add(nd::exp(nd::scale(lt.log_std, 2.0)), nd::square(lt.mean)),
                                     nd::scale(lt.log_std, 2.0)),
                             -1.0)),
      0.5);
  const Tensor loss = nd::add(nd::neg(loglik), nd::scale(kl, cfg_.kl_weight));
  if (parts) {
    parts->loss = loss.item();
    parts->loglik = loglik.item();
    parts->kl = kl.item();
    parts->clamped = clamped;
  }
  return loss;
}

LossComponents DeepStpp::elbo_loss(const EventSequence& window, const Event& target, Rng& rng) const {
  Tape tape;
  LossComponents parts;
  elbo_loss(tape, window, target, rng, &parts);
  return parts;
}

KernelParams DeepStpp::kernel_params(const EventSequence& window, Rng& rng, int n_samples) const {
  const std::vector<Event> ev = truncate(window);
  Rng latent_rng = rng.stream("latent");
  Rng rep_rng = rng.stream("rep-points");
  const LatentDist dist = encode(window);
  const RepresentativePoints rep = sample_representative_points(cfg_.J, rep_region_, ev.back().t, rep_rng);
  if (n_samples <= 0) return decode(dist.mean, window, rep);
  KernelParams acc;
  for (int k = 0; k < n_samples; ++k) {
    KernelParams kp = decode(sample_latent(dist, latent_rng), window, rep);
    if (k == 0) {
      acc = std::move(kp);
    } else {
      acc.w += kp.w;
      acc.gamma += kp.gamma;
      acc.beta += kp.beta;
    }
  }
  acc.w /= n_samples;
  acc.gamma /= n_samples;
  acc.beta /= n_samples;
  return acc;
}

DeepStppModel DeepStpp::conditional_model(const EventSequence& window, Rng& rng, int n_samples) const {
  return DeepStppModel(kernel_params(window, rng, n_samples), truncate(window).back().t);
}

Prediction DeepStpp::predict_event(const EventSequence& window, Rng& rng, int n_samples) const {
  const DeepStppModel model = conditional_model(window, rng, n_samples);
  PredictOptions opts;
  opts.allow_defective = true;
  Prediction p;
  p.t = predict_next_time(model, opts);
  const double norm = model.temporal_intensity(p.t);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericError("deepstpp prediction: all kernel weights vanish at the predicted time");
  }
  p.s = model.spatial_moment(p.t) / norm;
  return p;
}

void DeepStpp::save(const std::filesystem::path& stem) const {
  nn::save_checkpoint(params_, stem, {{"config", cfg_.to_json()}, {"rep_region", region_json(rep_region_)}});
}

DeepStpp DeepStpp::load(const std::filesystem::path& stem) {
  std::filesystem::path json_path = stem;
  json_path += ".json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest " + json_path.string() + ": " + e.what());
  }
  const auto& extra = manifest.at("extra");
  const auto& r = extra.at("rep_region");
  DeepStpp model(DeepStppConfig::from_json(extra.at("config")),
                 SpatialRegion::rectangle(Vec2(r.at(0), r.at(1)), Vec2(r.at(2), r.at(3))));
  nn::load_checkpoint(model.params_, stem);
  return model;
}

// ---------------------------------------------------------------- training

double mean_loss(const DeepStpp& model, const std::vector<WindowPair>& set, std::uint64_t seed) {
  if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Rng root = Rng(seed).stream("val");
  double acc = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Rng rng = root.split(i);
    acc += model.elbo_loss(set[i].input, set[i].target, rng).loss;
  }
  return acc / static_cast<double>(set.size());
}

TrainResult train(DeepStpp& model, const std::vector<WindowPair>& train_set, const std::vector<WindowPair>& val_set,
                  const TrainOptions& opts) {
  if (train_set.empty()) throw ValidationError("deepstpp train: empty training split");
  const DeepStppConfig& cfg = model.config();
  nn::ParameterSet& params = model.params();
  nn::Adam adam(params, {.lr = cfg.lr});
  const Rng root = Rng(cfg.seed).stream("train");
  const Rng shuffle_root = Rng(cfg.seed).stream("shuffle");

  TrainResult result;
  Eigen::VectorXd best = params.flatten();
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    const Rng epoch_rng = root.split(static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0, ll_sum = 0.0, kl_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      Tape tape;
      std::vector<Tensor> losses;
      for (std::size_t b = start; b < end; ++b) {
        const WindowPair& wp = train_set[order[b]];
        Rng rng = epoch_rng.split(order[b]);
        LossComponents parts;
        losses.push_back(model.elbo_loss(tape, wp.input, wp.target, rng, &parts));
        if (!std::isfinite(parts.loss)) {
          throw NumericError("deepstpp training diverged at epoch " + std::to_string(epoch) + " (loss " +
                             std::to_string(parts.loss) + ")");
        }
        loss_sum += parts.loss;
        ll_sum += parts.loglik;
        kl_sum += parts.kl;
        result.clamp_warnings += parts.clamped ? 1 : 0;
      }
      const Tensor total = nd::scale(nd::sum(nd::concat(losses, nd::Axis::cols)),
                                     1.0 / static_cast<double>(end - start));
      params.zero_grad();
      tape.backward(total);
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : params) sq += p->grad.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          for (auto& p : params) p->grad *= cfg.grad_clip / norm;
        }
      }
      try {
        adam.step();
      } catch (const NumericError& e) {
        throw NumericError("deepstpp training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    const double n = static_cast<double>(train_set.size());
    TrainTraceRow row{epoch, loss_sum / n, mean_loss(model, val_set, cfg.seed), ll_sum / n, kl_sum / n};
    result.trace.push_back(row);
    const double score = val_set.empty() ? row.train_loss : row.val_loss;
    if (score < result.best_val_loss) {
      result.best_val_loss = score;
      result.best_epoch = epoch;
      best = params.flatten();
    }
    if (opts.on_epoch && !opts.on_epoch(row)) break;
  }
  if (opts.keep_best && result.best_epoch > 0) params.assign(best);
  return result;
}

}  // namespace stpp::deep
