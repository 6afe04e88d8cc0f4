#ifndef STPP_CORE_HPP
#define STPP_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stpp {

template <typename Scalar>
using Vec2T = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Mat2T = Eigen::Matrix<Scalar, 2, 2>;

using Vec2 = Vec2T<double>;
using Mat2 = Mat2T<double>;

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or arguments. The CLI maps these to exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : Error(what), index_(index) {}
  // Offending event index, when the error is about a specific event.
  std::optional<std::size_t> index() const { return index_; }

 private:
  std::optional<std::size_t> index_;
};

// Numerical failure (divergence, non-convergence, non-finite values). Exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

struct Event {
  double t = 0.0;
  Vec2 s = Vec2::Zero();
};

class SpatialRegion {
 public:
  enum class Kind { Rectangle, Plane };

  static SpatialRegion plane() { return SpatialRegion(Kind::Plane, Vec2::Zero(), Vec2::Zero()); }
  static SpatialRegion rectangle(const Vec2& lo, const Vec2& hi);
  static SpatialRegion unit_square() { return rectangle(Vec2(0, 0), Vec2(1, 1)); }

  Kind kind() const { return kind_; }
  bool bounded() const { return kind_ == Kind::Rectangle; }
  const Vec2& lo() const { return lo_; }
  const Vec2& hi() const { return hi_; }
  double area() const;
  bool contains(const Vec2& s) const;

 private:
  SpatialRegion(Kind kind, Vec2 lo, Vec2 hi) : kind_(kind), lo_(std::move(lo)), hi_(std::move(hi)) {}
  Kind kind_;
  Vec2 lo_;
  Vec2 hi_;
};

// Checks finiteness, strict time ordering, times within [0, t_end] and region
// membership. Throws ValidationError naming the first offending index.
void validate_events(std::span<const Event> events, double t_end,
                     const SpatialRegion& region = SpatialRegion::plane());

// Time-ordered events observed on [0, t_end]. Immutable once built; the
// constructor enforces the ordering and finiteness invariants.
class EventSequence {
 public:
  EventSequence() = default;
  EventSequence(std::vector<Event> events, double t_end);
  // t_end defaults to the last event time (0 when empty).
  explicit EventSequence(std::vector<Event> events);

  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const Event& operator[](std::size_t i) const { return events_[i]; }
  const Event& back() const { return events_.back(); }
  double t_end() const { return t_end_; }

  // Events with t_i < t.
  std::span<const Event> before(double t) const;
  std::vector<double> times() const;

 private:
  std::vector<Event> events_;
  double t_end_ = 0.0;
};

void validate_sequence(const EventSequence& seq, const SpatialRegion& region);

struct SplitSpec {
  double window_length = 1.0;
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct WindowPair {
  EventSequence input;  // history of the window, t_end = target time
  Event target;
};

struct WindowSplit {
  std::vector<WindowPair> train;
  std::vector<WindowPair> val;
  std::vector<WindowPair> test;
  std::size_t total() const { return train.size() + val.size() + test.size(); }
};

// Cuts seq into windows [k L, (k+1) L), keeps windows with at least two events
// (last event is the target) and partitions them after a seeded shuffle.
WindowSplit window_split(const EventSequence& seq, const SplitSpec& spec);

// Same windows, unshuffled and unpartitioned, in time order.
std::vector<WindowPair> make_windows(const EventSequence& seq, double window_length);

// Rescales times so that the mean inter-event gap is 1. Returns the factor the
// original times were divided by.
double rescale_to_unit_gap(EventSequence& seq);

// Axis-aligned bounding box of all event locations, inflated by `inflate`
// (relative to its extent) on every side.
SpatialRegion bounding_region(std::span<const Event> events, double inflate = 0.1);

}  // namespace stpp

#endif  // STPP_CORE_HPP
