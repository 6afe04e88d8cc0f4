#include "stpp/core.hpp"

#include "stpp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stpp {

SpatialRegion SpatialRegion::rectangle(const Vec2& lo, const Vec2& hi) {
  if (!lo.allFinite() || !hi.allFinite() || !(lo.array() < hi.array()).all()) {
    std::ostringstream os;
    os << "rectangle requires lo < hi componentwise, got lo=(" << lo.x() << "," << lo.y() << ") hi=(" << hi.x()
       << "," << hi.y() << ")";
    throw ValidationError(os.str());
  }
  return SpatialRegion(Kind::Rectangle, lo, hi);
}

double SpatialRegion::area() const {
  if (!bounded()) return std::numeric_limits<double>::infinity();
  return (hi_ - lo_).prod();
}

bool SpatialRegion::contains(const Vec2& s) const {
  if (!bounded()) return true;
  return (s.array() >= lo_.array()).all() && (s.array() <= hi_.array()).all();
}

void validate_events(std::span<const Event> events, double t_end, const SpatialRegion& region) {
  if (!std::isfinite(t_end)) throw ValidationError("t_end is not finite");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (!std::isfinite(e.t) || !e.s.allFinite()) {
      throw ValidationError("non-finite value at index " + std::to_string(i), i);
    }
    if (i > 0 && !(e.t > events[i - 1].t)) {
      throw ValidationError("non-monotone at index " + std::to_string(i), i);
    }
    if (e.t < 0.0 || e.t > t_end) {
      throw ValidationError("time outside [0, t_end] at index " + std::to_string(i), i);
    }
    if (!region.contains(e.s)) {
      throw ValidationError("out of region at index " + std::to_string(i), i);
    }
  }
}

EventSequence::EventSequence(std::vector<Event> events, double t_end) : events_(std::move(events)), t_end_(t_end) {
  validate_events(events_, t_end_);
}

EventSequence::EventSequence(std::vector<Event> events) : events_(std::move(events)) {
  t_end_ = events_.empty() ? 0.0 : events_.back().t;
  validate_events(events_, t_end_);
}

std::span<const Event> EventSequence::before(double t) const {
  auto it = std::lower_bound(events_.begin(), events_.end(), t,
                             [](const Event& e, double v) { return e.t < v; });
  return {events_.data(), static_cast<std::size_t>(it - events_.begin())};
}

std::vector<double> EventSequence::times() const {
  std::vector<double> out;
  out.reserve(events_.size());
  for (const auto& e : events_) out.push_back(e.t);
  return out;
}

void validate_sequence(const EventSequence& seq, const SpatialRegion& region) {
  validate_events(seq.events(), seq.t_end(), region);
}

std::vector<WindowPair> make_windows(const EventSequence& seq, double window_length) {
  if (!(window_length > 0.0) || !std::isfinite(window_length)) {
    throw ValidationError("window_length must be positive");
  }
  std::vector<WindowPair> out;
  const auto& ev = seq.events();
  std::size_t i = 0;
  while (i < ev.size()) {
    const auto k = std::floor(ev[i].t / window_length);
    const double hi = (k + 1.0) * window_length;
    std::size_t j = i;
    while (j < ev.size() && ev[j].t < hi) ++j;
    if (j - i >= 2) {
      std::vector<Event> input(ev.begin() + static_cast<std::ptrdiff_t>(i), ev.begin() + static_cast<std::ptrdiff_t>(j - 1));
      const Event target = ev[j - 1];
      out.push_back({EventSequence(std::move(input), target.t), target});
    }
    i = j;
  }
  return out;
}

WindowSplit window_split(const EventSequence& seq, const SplitSpec& spec) {
  if (seq.size() < 2) throw ValidationError("window_split needs at least 2 events");
  if (!(spec.train > 0 && spec.val > 0 && spec.test > 0) ||
      std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  std::vector<WindowPair> windows = make_windows(seq, spec.window_length);
  if (windows.empty()) throw ValidationError("no usable windows (every window has fewer than 2 events)");

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(spec.seed).stream("shuffle");
  // Fisher-Yates with our own index draw so the permutation is portable.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  const auto n = static_cast<double>(windows.size());
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * n));
  const auto n_val = std::min(windows.size() - n_train, static_cast<std::size_t>(std::llround(spec.val * n)));

  WindowSplit split;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst = k < n_train ? split.train : (k < n_train + n_val ? split.val : split.test);
    dst.push_back(std::move(windows[order[k]]));
  }
  return split;
}

double rescale_to_unit_gap(EventSequence& seq) {
  if (seq.size() < 2) return 1.0;
  const double span = seq.back().t - seq[0].t;
  const double gap = span / static_cast<double>(seq.size() - 1);
  if (!(gap > 0.0)) return 1.0;
  std::vector<Event> ev = seq.events();
  for (auto& e : ev) e.t /= gap;
  seq = EventSequence(std::move(ev), seq.t_end() / gap);
  return gap;
}

SpatialRegion bounding_region(std::span<const Event> events, double inflate) {
  if (events.empty()) throw ValidationError("bounding_region of an empty event set");
  Vec2 lo = events[0].s;
  Vec2 hi = events[0].s;
  for (const auto& e : events) {
    lo = lo.cwiseMin(e.s);
    hi = hi.cwiseMax(e.s);
  }
  Vec2 pad = (hi - lo) * inflate;
  for (int d = 0; d < 2; ++d) pad[d] = std::max(pad[d], 1e-3);
  return SpatialRegion::rectangle(lo - pad, hi + pad);
}

}  // namespace stpp
