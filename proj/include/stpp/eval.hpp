#ifndef STPP_EVAL_HPP
#define STPP_EVAL_HPP

#include "stpp/core.hpp"
#include "stpp/model.hpp"

#include <json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stpp::eval {

struct LoglikSplit {
  double ll_space = 0.0;
  double ll_time = 0.0;
  // False when lambda*(t) <= 0 at the target; both terms are then -inf.
  bool valid = true;
  double total() const { return ll_space + ll_time; }
};

// ll_time = log lambda*(t) - Lambda(t_n, t); ll_space = log lambda*(s, t) - log lambda*(t).
// `model` is conditioned on the window, `target` is the next event.
LoglikSplit loglik_split(const SpatioTemporalModel& model, const Event& target);

// Cell-centred values on a rectangle; values(i, j) is the cell with centre
// lo + ((i + 1/2) dx, (j + 1/2) dy).
struct DensityGrid {
  SpatialRegion region = SpatialRegion::unit_square();
  std::size_t nx = 0;
  std::size_t ny = 0;
  Eigen::MatrixXd values;
  bool normalized = false;

  double cell_area() const;
  Vec2 centre(std::size_t i, std::size_t j) const;
  // Riemann mass: sum of values times cell area.
  double mass() const;
  // Divides by the Riemann mass; throws NumericError when it is not positive.
  void normalize();
};

DensityGrid make_grid(const std::function<double(const Vec2&)>& f, const SpatialRegion& region, std::size_t nx,
                      std::size_t ny, bool normalized);

// lambda*(s, t_query) on the grid, or f*(s | t_query) when normalized.
DensityGrid density_grid_from_model(const SpatioTemporalModel& model, double t_query, const SpatialRegion& region,
                                    std::size_t nx, std::size_t ny, bool normalized = true);

// sqrt(1/2 sum_c (sqrt(p_c a) - sqrt(q_c a))^2). Grids must share region and
// resolution and be normalized.
double hellinger(const DensityGrid& p, const DensityGrid& q);

// Mean Hellinger distance between normalized spatial slices of two models at
// the given query times.
double mean_hellinger(const SpatioTemporalModel& model, const SpatioTemporalModel& truth,
                      std::span<const double> times, const SpatialRegion& region, std::size_t nx, std::size_t ny);

// 100 * mean |est - truth| / truth over `times`; throws if truth <= 0.
double temporal_mape(const std::function<double(double)>& estimate, const std::function<double(double)>& truth,
                     std::span<const double> times);

// `count` equally spaced points in (t_n, t_n + span].
std::vector<double> query_times(double t_n, double span, std::size_t count);

// CSV with header x,y,value; one row per cell, x index outer.
std::string to_csv(const DensityGrid& grid);

}  // namespace stpp::eval

#endif  // STPP_EVAL_HPP
