#include <gtest/gtest.h>

#include "stpp/deepstpp.hpp"
#include "stpp/eval.hpp"
#include "stpp/parametric.hpp"
#include "support.hpp"

#include <cmath>

using namespace stpp;
using namespace stpp::eval;

namespace {

DensityGrid gaussian_grid(const Vec2& mean, const SpatialRegion& r, std::size_t n) {
  const Gauss2<double> g(mean, Mat2::Identity());
  return make_grid([&](const Vec2& s) { return g.pdf(s); }, r, n, n, true);
}

}  // namespace

TEST(LoglikSplit, PoissonOnUnitSquare) {
  const PoissonModel m(3.0, SpatialRegion::unit_square(), 2.0);
  const LoglikSplit ll = loglik_split(m, {2.4, Vec2(0.3, 0.8)});
  ASSERT_TRUE(ll.valid);
  EXPECT_NEAR(ll.ll_time, std::log(3.0) - 3.0 * 0.4, 1e-14);
  EXPECT_NEAR(ll.ll_space, 0.0, 1e-14);
}

TEST(LoglikSplit, SumIsJointLogDensity) {
  Rng rng(1);
  const SthpParams p = SthpParams::preset("ds2");
  const SthpModel m(p, EventSequence({{0.5, Vec2(0.1, 0.2)}, {1.0, Vec2(-0.3, 0.4)}}));
  for (int k = 0; k < 20; ++k) {
    const Event target{1.0 + rng.uniform(0.0, 3.0), Vec2(rng.normal(), rng.normal())};
    const LoglikSplit ll = loglik_split(m, target);
    const double joint = std::log(m.intensity(target.s, target.t)) - m.compensator(target.t);
    EXPECT_NEAR(ll.total(), joint, 1e-12 * std::max(1.0, std::abs(joint)));
  }
}

TEST(LoglikSplit, DeepModelMatchesClosedForm) {
  Rng rng(2);
  const deep::KernelParams kp = stpp::testing::random_kernel_params(rng, 12, 1.0, -1.0, 2.0);
  const deep::DeepStppModel m(kp, 1.0);
  const Event target{1.7, Vec2(0.2, -0.4)};
  const LoglikSplit ll = loglik_split(m, target);
  const double pdf = deep::conditional_pdf(kp, 1.0, target.s, target.t);
  EXPECT_NEAR(ll.total(), std::log(pdf), 1e-10);
  EXPECT_NEAR(ll.ll_time, std::log(deep::temporal_intensity(kp, 1.7)) - deep::temporal_compensator(kp, 1.0, 1.7), 1e-10);
}

TEST(LoglikSplit, ZeroIntensityIsSentinel) {
  deep::KernelParams kp;
  kp.w = Eigen::VectorXd::Zero(1);
  kp.gamma = Eigen::VectorXd::Ones(1);
  kp.beta = Eigen::VectorXd::Ones(1);
  kp.anchors = {{0.0, Vec2(0, 0)}};
  const LoglikSplit ll = loglik_split(deep::DeepStppModel(kp, 0.0), {1.0, Vec2(0, 0)});
  EXPECT_FALSE(ll.valid);
  EXPECT_EQ(ll.ll_time, -std::numeric_limits<double>::infinity());
}

TEST(Hellinger, BoundsAndSymmetry) {
  const SpatialRegion r = SpatialRegion::rectangle(Vec2(-6, -6), Vec2(6, 6));
  const DensityGrid p = gaussian_grid(Vec2(0, 0), r, 120);
  const DensityGrid q = gaussian_grid(Vec2(1.5, -0.5), r, 120);
  EXPECT_EQ(hellinger(p, p), 0.0);
  EXPECT_EQ(hellinger(p, q), hellinger(q, p));
  EXPECT_LE(hellinger(p, q), 1.0);

  const SpatialRegion u = SpatialRegion::unit_square();
  const DensityGrid left = make_grid([](const Vec2& s) { return s.x() < 0.5 ? 1.0 : 0.0; }, u, 10, 10, true);
  const DensityGrid right = make_grid([](const Vec2& s) { return s.x() < 0.5 ? 0.0 : 1.0; }, u, 10, 10, true);
  EXPECT_NEAR(hellinger(left, right), 1.0, 1e-15);
}

TEST(Hellinger, UnitGaussiansMatchClosedForm) {
  const SpatialRegion r = SpatialRegion::rectangle(Vec2(-8, -8), Vec2(9, 8));
  const double hd = hellinger(gaussian_grid(Vec2(0, 0), r, 200), gaussian_grid(Vec2(1, 0), r, 200));
  const double closed = std::sqrt(1.0 - std::exp(-1.0 / 8.0));
  EXPECT_NEAR(closed, 0.342787, 1e-6);
  EXPECT_NEAR(hd, closed, 1e-3);
}

TEST(Hellinger, RejectsMismatchedGrids) {
  const SpatialRegion r = SpatialRegion::unit_square();
  const DensityGrid a = make_grid([](const Vec2&) { return 1.0; }, r, 10, 10, true);
  const DensityGrid b = make_grid([](const Vec2&) { return 1.0; }, r, 20, 10, true);
  const DensityGrid raw = make_grid([](const Vec2&) { return 1.0; }, r, 10, 10, false);
  EXPECT_THROW(hellinger(a, b), ValidationError);
  EXPECT_THROW(hellinger(a, raw), ValidationError);
}

TEST(Mape, Examples) {
  const auto truth = [](double t) { return 1.0 + std::sin(t) * 0.5; };
  const std::vector<double> times = query_times(0.0, 5.0, 100);
  EXPECT_EQ(temporal_mape(truth, truth, times), 0.0);
  EXPECT_NEAR(temporal_mape([&](double t) { return 1.1 * truth(t); }, truth, times), 10.0, 1e-12);
  EXPECT_THROW(temporal_mape(truth, [](double) { return 0.0; }, times), ValidationError);
}

TEST(QueryTimes, Spacing) {
  const std::vector<double> t = query_times(2.0, 1.0, 4);
  ASSERT_EQ(t.size(), 4u);
  EXPECT_DOUBLE_EQ(t.front(), 2.25);
  EXPECT_DOUBLE_EQ(t.back(), 3.0);
}

TEST(DensityGrid, NormalizedMassAndRefinement) {
  const SthpParams p = SthpParams::preset("ds1");
  const SthpModel m(p, EventSequence({{0.2, Vec2(0.5, 0.5)}, {1.0, Vec2(-0.5, 0.2)}}));
  const SpatialRegion r = SpatialRegion::rectangle(Vec2(-4, -4), Vec2(4, 4));
  EXPECT_NEAR(density_grid_from_model(m, 1.3, r, 50, 50).mass(), 1.0, 1e-9);
  const double coarse = density_grid_from_model(m, 1.3, r, 50, 50, false).mass();
  const double fine = density_grid_from_model(m, 1.3, r, 200, 200, false).mass();
  EXPECT_LT(std::abs(coarse - fine) / fine, 5e-3);
}

TEST(DensityGrid, PeakAtRecentEventForPeakedKernels) {
  for (const char* preset : {"ds2", "ds3"}) {
    const SthpParams p = SthpParams::preset(preset);
    const Vec2 s(1.3, -0.7);
    const SthpModel m(p, EventSequence({{0.0, Vec2(-1, 1)}, {2.0, s}}));
    const SpatialRegion r = SpatialRegion::rectangle(Vec2(-3, -3), Vec2(3, 3));
    const DensityGrid g = density_grid_from_model(m, 2.0 + 1e-6, r, 60, 60);
    Eigen::Index i, j;
    g.values.maxCoeff(&i, &j);
    const auto si = static_cast<Eigen::Index>((s.x() + 3.0) / 0.1);
    const auto sj = static_cast<Eigen::Index>((s.y() + 3.0) / 0.1);
    EXPECT_LE(std::abs(i - si), 1) << preset;
    EXPECT_LE(std::abs(j - sj), 1) << preset;
  }
}

TEST(DensityGrid, CsvLayout) {
  const DensityGrid g = make_grid([](const Vec2& s) { return s.x() + 10 * s.y(); },
                                  SpatialRegion::rectangle(Vec2(0, 0), Vec2(2, 1)), 2, 1, false);
  EXPECT_EQ(to_csv(g), "x,y,value\n0.5,0.5,5.5\n1.5,0.5,6.5\n");
}
