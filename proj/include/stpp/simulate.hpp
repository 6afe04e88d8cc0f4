#ifndef STPP_SIMULATE_HPP
#define STPP_SIMULATE_HPP

#include "stpp/core.hpp"
#include "stpp/parametric.hpp"
#include "stpp/rng.hpp"

#include <functional>
#include <span>
#include <vector>

namespace stpp {

// A temporal process driven by Ogata's modified thinning. The process owns its
// history; accept() is called once per retained time.
class ThinningProcess {
 public:
  virtual ~ThinningProcess() = default;
  // lambda*(t) given the current history.
  virtual double intensity(double t) const = 0;
  // M*(t): upper bound of lambda* on [t, t + L*(t)].
  virtual double upper_bound(double t) const = 0;
  // L*(t): horizon of the bound; +inf allowed.
  virtual double bound_horizon(double t) const = 0;
  virtual void accept(double t, Rng& rng) = 0;
};

struct ThinningStats {
  std::size_t candidates = 0;
  std::size_t accepted = 0;
  std::size_t horizon_skips = 0;
};

// Runs the thinning loop on (t0, T]. Throws NumericError when M*(t) <= 0 or
// when a candidate's intensity exceeds its bound.
ThinningStats ogata_thinning(ThinningProcess& process, double horizon, Rng& rng, double t0 = 0.0);

using HistoryIntensity = std::function<double(std::span<const double> history, double t)>;

struct ThinningBounds {
  HistoryIntensity upper;    // M*
  HistoryIntensity horizon;  // L*
};

// Functional form for purely temporal processes; returns accepted times.
std::vector<double> ogata_thinning(const HistoryIntensity& intensity, const ThinningBounds& bounds, double horizon,
                                   Rng& rng);

// A spatiotemporal process simulated by thinning its temporal marginal and
// drawing each retained event's location from f*(s | t).
class StppProcess {
 public:
  virtual ~StppProcess() = default;
  virtual double temporal_intensity(std::span<const Event> history, double t) const = 0;
  virtual double upper_bound(std::span<const Event> history, double t) const = 0;
  virtual double bound_horizon(std::span<const Event> history, double t) const = 0;
  virtual Vec2 sample_location(std::span<const Event> history, double t, Rng& rng) const = 0;
  // Called after an event is appended; lets grid-based processes update state.
  virtual void on_event(std::span<const Event>) {}
};

EventSequence simulate_stpp(StppProcess& process, double horizon, Rng& rng);

// STHP by thinning: M* = lambda*(t), L* = inf, locations from the mixture
// f*(s | t).
class SthpThinningProcess final : public StppProcess {
 public:
  explicit SthpThinningProcess(SthpParams params);
  double temporal_intensity(std::span<const Event> history, double t) const override;
  double upper_bound(std::span<const Event> history, double t) const override;
  double bound_horizon(std::span<const Event>, double) const override;
  Vec2 sample_location(std::span<const Event> history, double t, Rng& rng) const override;

 private:
  SthpParams p_;
};

// STSC on a cell grid: lambda*(t) is the cell average, L* = 2 / lambda*(t),
// M* = lambda*(t + L*), locations from the multinomial over cells with
// uniform jitter inside the chosen cell.
class StscGridProcess final : public StppProcess {
 public:
  StscGridProcess(StscParams params, GridSpec grid = {});
  double temporal_intensity(std::span<const Event> history, double t) const override;
  double upper_bound(std::span<const Event> history, double t) const override;
  double bound_horizon(std::span<const Event> history, double t) const override;
  Vec2 sample_location(std::span<const Event> history, double t, Rng& rng) const override;
  void on_event(std::span<const Event> history) override;

  // Cell intensities lambda*(c, t) for the current history.
  std::vector<double> cell_intensities(double t) const;
  const std::vector<Vec2>& cell_centres() const { return centres_; }

 private:
  StscParams p_;
  GridSpec grid_;
  Vec2 cell_size_;
  std::vector<Vec2> centres_;
  std::vector<double> g0_;
  std::vector<double> suppression_;  // alpha * sum_i g_2(c, s_i)
};

// Homogeneous Poisson process with uniform locations on a rectangle.
class PoissonProcess final : public StppProcess {
 public:
  PoissonProcess(double rate, SpatialRegion region);
  double temporal_intensity(std::span<const Event>, double) const override { return rate_; }
  double upper_bound(std::span<const Event>, double) const override { return rate_; }
  double bound_horizon(std::span<const Event>, double) const override;
  Vec2 sample_location(std::span<const Event>, double, Rng& rng) const override;

 private:
  double rate_;
  SpatialRegion region_;
};

struct ClusterOptions {
  int max_generations = 100;
};

struct ClusterStats {
  std::size_t background = 0;
  std::vector<std::size_t> per_generation;  // offspring count of each generation
  std::size_t parents_with_offspring_checked = 0;
};

// STHP by its branching structure: background Pois(mu) events with locations
// N(s_mu, cov_g0), then generation after generation of offspring from
// Pois(g_1(t - t_i)) on (t_i, T] with locations N(s_i, cov_g2).
EventSequence simulate_sthp_cluster(const SthpParams& params, double horizon, Rng& rng,
                                    const ClusterOptions& opts = {}, ClusterStats* stats = nullptr);

// Same, but returns every event with its parent index (-1 for background).
struct ClusterEvent {
  Event event;
  long parent = -1;
};
std::vector<ClusterEvent> simulate_sthp_cluster_tree(const SthpParams& params, double horizon, Rng& rng,
                                                     const ClusterOptions& opts = {});

EventSequence simulate_stsc_grid(const StscParams& params, double horizon, Rng& rng, GridSpec grid = {});

// Runs `simulate(rng_i)` for i in [0, count) with rng_i = Rng(seed).split(i),
// on up to `threads` worker threads (0: STPP_THREADS or hardware concurrency).
std::vector<EventSequence> simulate_batch(std::size_t count, std::uint64_t seed,
                                          const std::function<EventSequence(Rng&)>& simulate,
                                          unsigned threads = 0);

// Thread cap from the STPP_THREADS environment variable (default: hardware).
unsigned default_thread_count();

}  // namespace stpp

#endif  // STPP_SIMULATE_HPP
