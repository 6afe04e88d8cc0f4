#include <gtest/gtest.h>

#include "stpp/deepstpp.hpp"
#include "stpp/parametric.hpp"
#include "stpp/simulate.hpp"
#include "support.hpp"

#include <algorithm>
#include <filesystem>
#include <numbers>

using namespace stpp;
using namespace stpp::deep;
using stpp::testing::random_kernel_params;

namespace {

KernelParams one_point(double w, double gamma, double beta, Event anchor) {
  KernelParams kp;
  kp.w = Eigen::VectorXd::Constant(1, w);
  kp.gamma = Eigen::VectorXd::Constant(1, gamma);
  kp.beta = Eigen::VectorXd::Constant(1, beta);
  kp.anchors = {anchor};
  return kp;
}

const SpatialRegion kUnit = SpatialRegion::unit_square();

}  // namespace

TEST(DeepKernel, CompensatorMatchesQuadrature) {
  Rng rng(1);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double t_n = rng.uniform(0.0, 5.0);
    const auto m = static_cast<std::size_t>(rng.uniform(1.0, 40.0));
    KernelParams kp = random_kernel_params(rng, m, t_n, -2.0, 3.0);
    if (k % 4 == 0) kp.beta[0] = rng.uniform(-1e-9, 1e-9);
    const double t = t_n + rng.uniform(0.0, 2.0);
    worst = std::max(worst, std::abs(temporal_compensator(kp, t_n, t) - stpp::testing::quadrature_compensator(kp, t_n, t)));
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(DeepKernel, CompensatorLimitBranch) {
  const Event a{0.5, Vec2(0, 0)};
  const double w = 1.3, age = 0.5, delta = 1.5;
  EXPECT_NEAR(temporal_compensator(one_point(w, 1.0, 0.0, a), 1.0, 2.5), w * delta, 1e-15);
  for (double b : {5e-9, -5e-9, 2e-8, -2e-8}) {
    const long double exact = w * std::exp(-(long double)b * age) * -std::expm1(-(long double)b * delta) / b;
    // Below |beta| = 1e-8 the limit w k_t(t_n) delta is used; its error is
    // first order in beta.
    const double bound = std::abs(b) < 1e-8 ? w * delta * std::abs(b) * (delta / 2 + age) * 1.01 : 1e-15;
    EXPECT_LE(std::abs(temporal_compensator(one_point(w, 1.0, b, a), 1.0, 2.5) - (double)exact), bound) << b;
  }
}

TEST(DeepKernel, CompensatorExamples) {
  Rng rng(2);
  const KernelParams kp = random_kernel_params(rng, 10, 1.0, -1.0, 2.0);
  EXPECT_EQ(temporal_compensator(kp, 1.0, 1.0), 0.0);
  const KernelParams single = one_point(1.0, 1.0, 1.0, {2.0, Vec2(0, 0)});
  EXPECT_NEAR(temporal_compensator(single, 2.0, 3.7), 1.0 - std::exp(-1.7), 1e-15);
  EXPECT_THROW(temporal_compensator(single, 2.0, 1.0), ValidationError);
}

TEST(DeepKernel, IntensityExamples) {
  const KernelParams single = one_point(1.0, 1.0, 1.0, {0.3, Vec2(0, 0)});
  EXPECT_NEAR(intensity(single, Vec2(0, 0), 0.3), 1.0 / (2.0 * std::numbers::pi), 1e-15);
  Rng rng(3);
  KernelParams kp = random_kernel_params(rng, 12, 1.0, 0.0, 2.0);
  kp.w.setZero();
  EXPECT_EQ(intensity(kp, Vec2(0.2, 0.4), 1.5), 0.0);
}

TEST(DeepKernel, SpatialIntegralIsTemporalIntensity) {
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    const KernelParams kp = random_kernel_params(rng, 3, 1.0, -1.0, 2.0, 1.0, 4.0);
    const double t = 1.0 + rng.uniform(0.0, 1.0);
    std::vector<double> xb, yb;
    for (const Event& a : kp.anchors) {
      xb.push_back(a.s.x());
      yb.push_back(a.s.y());
    }
    const auto f = [&](double x, double y) { return intensity(kp, Vec2(x, y), t); };
    const double q = quad::integrate_2d(f, Vec2(-40, -40), Vec2(40, 40), {.abs_tol = 1e-8}, xb, yb).value;
    EXPECT_NEAR(q, temporal_intensity(kp, t), 1e-5);
  }
}

TEST(DeepKernel, PdfMassIdentity) {
  Rng rng(5);
  for (int k = 0; k < 10; ++k) {
    const auto m = static_cast<std::size_t>(rng.uniform(1.0, 12.0));
    const KernelParams kp = random_kernel_params(rng, m, 2.0, 0.2, 3.0);
    EXPECT_NEAR(stpp::testing::quadrature_pdf_mass(kp, 2.0), stpp::testing::closed_form_pdf_mass(kp, 2.0), 1e-5);
  }
}

TEST(DeepKernel, PdfAtLastEventIsIntensity) {
  Rng rng(6);
  const KernelParams kp = random_kernel_params(rng, 8, 1.0, -1.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const Vec2 s(rng.uniform(-2, 2), rng.uniform(-2, 2));
    EXPECT_EQ(conditional_pdf(kp, 1.0, s, 1.0), intensity(kp, s, 1.0));
    EXPECT_GE(conditional_pdf(kp, 1.0, s, 1.0 + rng.uniform(0.0, 5.0)), 0.0);
  }
}

TEST(DeepKernel, PermutationInvariant) {
  Rng rng(7);
  const KernelParams kp = random_kernel_params(rng, 15, 1.0, -1.0, 2.0);
  std::vector<std::size_t> perm(kp.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  KernelParams q = kp;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(perm[i]);
    q.w[a] = kp.w[b];
    q.gamma[a] = kp.gamma[b];
    q.beta[a] = kp.beta[b];
    q.anchors[i] = kp.anchors[perm[i]];
  }
  const Vec2 s(0.3, -0.2);
  EXPECT_NEAR(intensity(q, s, 1.4), intensity(kp, s, 1.4), 1e-13);
  EXPECT_NEAR(temporal_compensator(q, 1.0, 2.2), temporal_compensator(kp, 1.0, 2.2), 1e-13);
  EXPECT_NEAR(conditional_pdf(q, 1.0, s, 1.9), conditional_pdf(kp, 1.0, s, 1.9), 1e-13);
}

TEST(DeepKernel, ValidationRejectsBadParams) {
  KernelParams kp = one_point(1.0, 1.0, 1.0, {0.0, Vec2(0, 0)});
  kp.gamma[0] = 0.0;
  EXPECT_THROW(kp.validate(), ValidationError);
  EXPECT_THROW(DeepStppModel(one_point(1.0, 1.0, 1.0, {2.0, Vec2(0, 0)}), 1.0), ValidationError);
}

TEST(DeepPredict, SingleAnchorLocation) {
  const DeepStppModel m(one_point(0.8, 2.0, 0.5, {1.0, Vec2(0.3, 0.7)}), 1.0);
  PredictOptions o;
  o.allow_defective = true;
  const double t = predict_next_time(m, o);
  EXPECT_GT(t, 1.0);
  const Vec2 s = m.spatial_moment(t) / m.temporal_intensity(t);
  EXPECT_NEAR(s.x(), 0.3, 1e-15);
  EXPECT_NEAR(s.y(), 0.7, 1e-15);
}

TEST(DeepPredict, MomentMatchesSpatialQuadrature) {
  Rng rng(8);
  const KernelParams kp = random_kernel_params(rng, 4, 1.0, 0.2, 2.0, 1.0, 4.0);
  const DeepStppModel m(kp, 1.0);
  const double t = 1.6;
  std::vector<double> xb, yb;
  for (const Event& a : kp.anchors) {
    xb.push_back(a.s.x());
    yb.push_back(a.s.y());
  }
  const double lam = m.temporal_intensity(t);
  const auto fx = [&](double x, double y) { return x * m.intensity(Vec2(x, y), t) / lam; };
  const auto fy = [&](double x, double y) { return y * m.intensity(Vec2(x, y), t) / lam; };
  const Vec2 lo(-45, -45), hi(45, 45);
  const Vec2 moment = m.spatial_moment(t) / lam;
  EXPECT_NEAR(quad::integrate_2d(fx, lo, hi, {.abs_tol = 1e-9}, xb, yb).value, moment.x(), 1e-6);
  EXPECT_NEAR(quad::integrate_2d(fy, lo, hi, {.abs_tol = 1e-9}, xb, yb).value, moment.y(), 1e-6);
}

TEST(DeepConfig, ValidationAndJson) {
  DeepStppConfig c = DeepStppConfig::small();
  EXPECT_EQ(c.d_model, 32);
  EXPECT_EQ(c.d_z, 16);
  EXPECT_EQ(c.J, 20);
  const DeepStppConfig back = DeepStppConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  c.d_model = 33;
  EXPECT_THROW(c.validate(), ValidationError);
  c = DeepStppConfig::small();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = DeepStppConfig::small();
  c.grad_clip = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(DeepNet, EncodeDeterministicAndFinite) {
  const DeepStpp model(DeepStppConfig::small(), kUnit);
  Rng rng(9);
  const WindowPair wp = stpp::testing::random_window(rng, 30);
  const LatentDist a = model.encode(wp.input);
  const LatentDist b = model.encode(wp.input);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.log_std, b.log_std);
  EXPECT_TRUE(a.mean.allFinite() && a.log_std.allFinite());
  EXPECT_EQ(a.mean.size(), 16);
  EXPECT_THROW(model.encode(EventSequence({}, 1.0)), ValidationError);
}

TEST(DeepNet, EncodeIsLocallyLipschitz) {
  const DeepStpp model(DeepStppConfig::small(), kUnit);
  Rng rng(10);
  const WindowPair wp = stpp::testing::random_window(rng, 20);
  std::vector<Event> ev = wp.input.events();
  ev[7].s.x() += 1e-6;
  const LatentDist a = model.encode(wp.input);
  const LatentDist b = model.encode(EventSequence(ev, wp.input.t_end()));
  const double change = (a.mean - b.mean).cwiseAbs().maxCoeff();
  EXPECT_GT(change, 0.0);
  EXPECT_LT(change, 1e-3);
}

TEST(DeepNet, LatentSampling) {
  const DeepStpp model(DeepStppConfig::small(), kUnit);
  LatentDist d;
  d.mean = Eigen::VectorXd::LinSpaced(16, -1.0, 1.0);
  d.log_std = Eigen::VectorXd::Constant(16, -std::numeric_limits<double>::infinity());
  Rng rng(11);
  EXPECT_EQ(model.sample_latent(d, rng), d.mean);

  d.log_std = Eigen::VectorXd::LinSpaced(16, -1.0, 0.5);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(16);
  for (int i = 0; i < n; ++i) sum += model.sample_latent(d, rng);
  const Eigen::VectorXd mean = sum / n;
  for (Eigen::Index k = 0; k < 16; ++k) {
    EXPECT_LT(std::abs(mean[k] - d.mean[k]), 4.0 * std::exp(d.log_std[k]) / std::sqrt(double(n)));
  }

  // Path derivative of z with respect to the mean is one.
  nd::Tape tape;
  const nd::Tensor mu = tape.variable(nd::Mat::Constant(1, 16, 0.3));
  const nd::Tensor ls = tape.variable(nd::Mat::Constant(1, 16, -0.5));
  const nd::Tensor z = model.sample_latent(tape, {mu, ls}, rng);
  tape.backward(nd::sum(z));
  EXPECT_TRUE(mu.grad().isOnes(1e-15));
}

TEST(DeepNet, DecodeRangesAndLength) {
  const DeepStppConfig cfg = DeepStppConfig::small();
  const DeepStpp model(cfg, kUnit);
  Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    const WindowPair wp = stpp::testing::random_window(rng, 1 + k);
    Eigen::VectorXd z(cfg.d_z);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = 3.0 * rng.normal();
    const RepresentativePoints rep = sample_representative_points(cfg.J, kUnit, wp.input.back().t, rng);
    for (const Vec2& s : rep.locations) EXPECT_TRUE(kUnit.contains(s));
    const KernelParams kp = model.decode(z, wp.input, rep);
    ASSERT_EQ(kp.size(), static_cast<std::size_t>(1 + k + cfg.J));
    EXPECT_TRUE((kp.w.array() >= 0.0).all());
    EXPECT_TRUE((kp.gamma.array() >= 1e-6).all());
    EXPECT_TRUE(kp.beta.allFinite());
    // Most recent history event first, representative points last at t_n.
    EXPECT_EQ(kp.anchors.front().t, wp.input.back().t);
    EXPECT_EQ(kp.anchors.back().t, wp.input.back().t);
  }
}

TEST(DeepNet, HistoryIsTruncated) {
  DeepStppConfig cfg = DeepStppConfig::small();
  cfg.max_history = 5;
  const DeepStpp model(cfg, kUnit);
  Rng rng(13);
  const WindowPair wp = stpp::testing::random_window(rng, 12);
  EXPECT_EQ(model.truncate(wp.input).size(), 5u);
  Rng r2(1);
  EXPECT_EQ(model.kernel_params(wp.input, r2).size(), static_cast<std::size_t>(5 + cfg.J));
}

TEST(DeepLoss, KlNonNegativeAndZeroAtPrior) {
  DeepStpp model(DeepStppConfig::small(), kUnit);
  Rng rng(14);
  for (int k = 0; k < 10; ++k) {
    const WindowPair wp = stpp::testing::random_window(rng, 5 + k);
    Rng r = rng.split(static_cast<std::uint64_t>(k));
    const LossComponents c = model.elbo_loss(wp.input, wp.target, r);
    EXPECT_GE(c.kl, 0.0);
    EXPECT_NEAR(c.loss, -c.loglik + 1e-3 * c.kl, 1e-12);
  }
  for (const char* name : {"latent.mean.w", "latent.mean.b", "latent.log_std.w", "latent.log_std.b"}) {
    model.params().get(name).value.setZero();
  }
  const WindowPair wp = stpp::testing::random_window(rng, 6);
  Rng r(1);
  EXPECT_EQ(model.elbo_loss(wp.input, wp.target, r).kl, 0.0);
}

TEST(DeepLoss, LoglikMatchesClosedForm) {
  Rng rng(15);
  const WindowPair wp = stpp::testing::random_window(rng, 10);
  // With the posterior collapsed, the sampled z equals the mean and the
  // tape loglik must equal the closed-form kernel expression.
  DeepStpp collapsed(DeepStppConfig::small(), kUnit);
  collapsed.params().get("latent.log_std.w").value.setZero();
  collapsed.params().get("latent.log_std.b").value.setConstant(-80.0);
  Rng a(3), b(3);
  const LossComponents c = collapsed.elbo_loss(wp.input, wp.target, a);
  const KernelParams kp = collapsed.kernel_params(wp.input, b);
  const double t_n = wp.input.back().t;
  const double expected = std::log(intensity(kp, wp.target.s, wp.target.t)) - temporal_compensator(kp, t_n, wp.target.t);
  EXPECT_NEAR(c.loglik, expected, 1e-10);
}

TEST(DeepLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    DeepStpp model(stpp::testing::tiny_config(trial), kUnit);
    Rng rng(100 + trial);
    const WindowPair wp = stpp::testing::random_window(rng, 3);
    const auto gc = stpp::testing::check_elbo_gradient(model, wp.input, wp.target, trial);
    EXPECT_LT(gc.max_rel_error, 1e-3) << gc.worst;
  }
}

TEST(DeepLoss, RejectsTargetBeforeWindow) {
  const DeepStpp model(DeepStppConfig::small(), kUnit);
  Rng rng(16);
  const WindowPair wp = stpp::testing::random_window(rng, 4);
  Rng r(0);
  EXPECT_THROW(model.elbo_loss(wp.input, {wp.input[0].t, Vec2(0.5, 0.5)}, r), ValidationError);
}

namespace {

std::vector<WindowPair> ds1_windows(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  const EventSequence seq = simulate_sthp_cluster(SthpParams::preset("ds1"), 40.0 * double(count), rng);
  std::vector<WindowPair> w = make_windows(seq, 20.0);
  if (w.size() > count) w.resize(count);
  return w;
}

SpatialRegion region_of(const std::vector<WindowPair>& set) {
  std::vector<Event> all;
  for (const auto& wp : set) {
    all.insert(all.end(), wp.input.events().begin(), wp.input.events().end());
    all.push_back(wp.target);
  }
  return bounding_region(all, 0.1);
}

}  // namespace

TEST(DeepTrain, ZeroLearningRateLeavesWeights) {
  const auto data = ds1_windows(16, 1);
  DeepStppConfig cfg = stpp::testing::tiny_config(0);
  cfg.lr = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  DeepStpp model(cfg, region_of(data));
  const Eigen::VectorXd before = model.params().flatten();
  train(model, data, {});
  EXPECT_EQ(model.params().flatten(), before);
}

TEST(DeepTrain, GradientClipping) {
  const auto data = ds1_windows(16, 1);
  DeepStppConfig cfg = stpp::testing::tiny_config(0);
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const auto trained = [&](double clip) {
    cfg.grad_clip = clip;
    DeepStpp model(cfg, region_of(data));
    train(model, data, {}, {.keep_best = false});
    return Eigen::VectorXd(model.params().flatten());
  };
  // A threshold no batch reaches changes nothing.
  EXPECT_EQ(trained(1e300), trained(0.0));
  // Clipped far below Adam's eps, each step moves a weight by about lr * clip / eps.
  DeepStpp fresh(cfg, region_of(data));
  const Eigen::VectorXd start = fresh.params().flatten();
  const double moved = (trained(1e-12) - start).cwiseAbs().maxCoeff();
  EXPECT_GT(moved, 0.0);
  EXPECT_LT(moved, 8 * cfg.lr * 1e-3);
}

TEST(DeepTrain, DeterministicAndImproves) {
  const auto data = ds1_windows(64, 2);
  const std::vector<WindowPair> tr(data.begin(), data.begin() + 48), va(data.begin() + 48, data.end());
  DeepStppConfig cfg = DeepStppConfig::small();
  cfg.epochs = 15;
  cfg.batch_size = 16;
  DeepStpp a(cfg, region_of(data)), b(cfg, region_of(data));
  const double untrained = mean_loss(a, va, cfg.seed);
  const TrainResult ra = train(a, tr, va);
  const TrainResult rb = train(b, tr, va);
  EXPECT_EQ(a.params().flatten(), b.params().flatten());
  ASSERT_EQ(ra.trace.size(), 15u);
  EXPECT_EQ(ra.trace.back().val_loss, rb.trace.back().val_loss);
  EXPECT_LT(ra.best_val_loss, untrained);
  EXPECT_NEAR(mean_loss(a, va, cfg.seed), ra.best_val_loss, 1e-12);
}

TEST(DeepTrain, SaveLoadRoundTrip) {
  const auto data = ds1_windows(8, 3);
  DeepStpp model(stpp::testing::tiny_config(4), region_of(data));
  const auto dir = std::filesystem::temp_directory_path() / "stpp_deep_ckpt";
  std::filesystem::create_directories(dir);
  model.save(dir / "m");
  const DeepStpp back = DeepStpp::load(dir / "m");
  EXPECT_EQ(back.params().flatten(), model.params().flatten());
  EXPECT_EQ(back.config().to_json(), model.config().to_json());
  Rng r1(5), r2(5);
  EXPECT_EQ(back.predict_event(data[0].input, r1).t, model.predict_event(data[0].input, r2).t);
  std::filesystem::remove_all(dir);
}

TEST(DeepTrain, PredictionAfterWindow) {
  const auto data = ds1_windows(10, 4);
  const DeepStpp model(DeepStppConfig::small(), region_of(data));
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng(i);
    const Prediction p = model.predict_event(data[i].input, rng);
    EXPECT_GT(p.t, data[i].input.back().t);
    EXPECT_TRUE(p.s.allFinite());
  }
}
