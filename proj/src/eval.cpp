#include "stpp/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace stpp::eval {

LoglikSplit loglik_split(const SpatioTemporalModel& model, const Event& target) {
  LoglikSplit out;
  const double lam_t = model.temporal_intensity(target.t);
  const double lam_st = model.intensity(target.s, target.t);
  if (!(lam_t > 0.0) || !std::isfinite(lam_t)) {
    out.valid = false;
    out.ll_time = -std::numeric_limits<double>::infinity();
    out.ll_space = -std::numeric_limits<double>::infinity();
    return out;
  }
  out.ll_time = std::log(lam_t) - model.compensator(target.t);
  out.ll_space = lam_st > 0.0 ? std::log(lam_st) - std::log(lam_t) : -std::numeric_limits<double>::infinity();
  return out;
}

double DensityGrid::cell_area() const {
  return region.area() / static_cast<double>(nx * ny);
}

Vec2 DensityGrid::centre(std::size_t i, std::size_t j) const {
  const Vec2 span = region.hi() - region.lo();
  return region.lo() + Vec2((static_cast<double>(i) + 0.5) * span.x() / static_cast<double>(nx),
                            (static_cast<double>(j) + 0.5) * span.y() / static_cast<double>(ny));
}

double DensityGrid::mass() const { return values.sum() * cell_area(); }

void DensityGrid::normalize() {
  const double m = mass();
  if (!(m > 0.0) || !std::isfinite(m)) {
    std::ostringstream os;
    os << "density grid has mass " << m << " and cannot be normalized";
    throw NumericError(os.str());
  }
  values /= m;
  normalized = true;
}

DensityGrid make_grid(const std::function<double(const Vec2&)>& f, const SpatialRegion& region, std::size_t nx,
                      std::size_t ny, bool normalized) {
  if (!region.bounded()) throw ValidationError("density grid needs a rectangular region");
  if (nx == 0 || ny == 0) throw ValidationError("density grid needs at least one cell per axis");
  DensityGrid g;
  g.region = region;
  g.nx = nx;
  g.ny = ny;
  g.values.resize(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f(g.centre(i, j));
    }
  }
  if (normalized) g.normalize();
  return g;
}

DensityGrid density_grid_from_model(const SpatioTemporalModel& model, double t_query, const SpatialRegion& region,
                                    std::size_t nx, std::size_t ny, bool normalized) {
  return make_grid([&](const Vec2& s) { return model.intensity(s, t_query); }, region, nx, ny, normalized);
}

double hellinger(const DensityGrid& p, const DensityGrid& q) {
  if (p.nx != q.nx || p.ny != q.ny || !(p.region.lo() == q.region.lo()) || !(p.region.hi() == q.region.hi())) {
    throw ValidationError("hellinger: grids differ in region or resolution");
  }
  if (!p.normalized || !q.normalized) throw ValidationError("hellinger: both grids must be normalized");
  const double a = p.cell_area();
  const double s = ((p.values * a).array().sqrt() - (q.values * a).array().sqrt()).square().sum();
  return std::min(1.0, std::sqrt(0.5 * s));
}

double mean_hellinger(const SpatioTemporalModel& model, const SpatioTemporalModel& truth,
                      std::span<const double> times, const SpatialRegion& region, std::size_t nx, std::size_t ny) {
  if (times.empty()) throw ValidationError("mean_hellinger: no query times");
  double acc = 0.0;
  for (double t : times) {
    acc += hellinger(density_grid_from_model(model, t, region, nx, ny), density_grid_from_model(truth, t, region, nx, ny));
  }
  return acc / static_cast<double>(times.size());
}

double temporal_mape(const std::function<double(double)>& estimate, const std::function<double(double)>& truth,
                     std::span<const double> times) {
  if (times.empty()) throw ValidationError("temporal_mape: no sample times");
  double acc = 0.0;
  for (double t : times) {
    const double ref = truth(t);
    if (!(ref > 0.0)) {
      std::ostringstream os;
      os << "temporal_mape: true intensity " << ref << " at t = " << t << " is not positive";
      throw ValidationError(os.str());
    }
    acc += std::abs(estimate(t) - ref) / ref;
  }
  return 100.0 * acc / static_cast<double>(times.size());
}

std::vector<double> query_times(double t_n, double span, std::size_t count) {
  if (!(span > 0.0) || count == 0) throw ValidationError("query_times: span and count must be positive");
  std::vector<double> out;
  for (std::size_t k = 1; k <= count; ++k) out.push_back(t_n + span * static_cast<double>(k) / static_cast<double>(count));
  return out;
}

std::string to_csv(const DensityGrid& grid) {
  std::ostringstream os;
  os << std::setprecision(17) << "x,y,value\n";
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t j = 0; j < grid.ny; ++j) {
      const Vec2 c = grid.centre(i, j);
      os << c.x() << ',' << c.y() << ',' << grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
         << '\n';
    }
  }
  return os.str();
}

}  // namespace stpp::eval
