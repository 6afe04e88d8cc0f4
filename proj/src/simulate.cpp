#include "stpp/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

namespace stpp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class FunctionalProcess final : public ThinningProcess {
 public:
  FunctionalProcess(const HistoryIntensity& lam, const ThinningBounds& b) : lam_(lam), b_(b) {}
  double intensity(double t) const override { return lam_(times, t); }
  double upper_bound(double t) const override { return b_.upper(times, t); }
  double bound_horizon(double t) const override { return b_.horizon ? b_.horizon(times, t) : kInf; }
  void accept(double t, Rng&) override { times.push_back(t); }
  std::vector<double> times;

 private:
  const HistoryIntensity& lam_;
  const ThinningBounds& b_;
};

class StppAdapter final : public ThinningProcess {
 public:
  explicit StppAdapter(StppProcess& p) : p_(p) {}
  double intensity(double t) const override { return p_.temporal_intensity(events, t); }
  double upper_bound(double t) const override { return p_.upper_bound(events, t); }
  double bound_horizon(double t) const override { return p_.bound_horizon(events, t); }
  void accept(double t, Rng& rng) override {
    const Vec2 s = p_.sample_location(events, t, rng);
    events.push_back({t, s});
    p_.on_event(events);
  }
  std::vector<Event> events;

 private:
  StppProcess& p_;
};

// Offspring of one parent: intensity g_1(t - t_parent), decreasing, so the
// intensity at the current time bounds the rest of the path.
class OffspringProcess final : public ThinningProcess {
 public:
  OffspringProcess(const SthpParams& p, double t_parent) : p_(p), t0_(t_parent) {}
  double intensity(double t) const override { return p_.alpha * std::exp(-p_.beta * (t - t0_)); }
  // Floored so an underflowed tail ends the loop through a huge waiting time.
  double upper_bound(double t) const override { return std::max(intensity(t), std::numeric_limits<double>::min()); }
  double bound_horizon(double) const override { return kInf; }
  void accept(double t, Rng&) override { times.push_back(t); }
  std::vector<double> times;

 private:
  const SthpParams& p_;
  double t0_;
};

// Excitation sum over events with t_i <= t.
double sthp_excitation(std::span<const Event> history, double beta, double t) {
  double acc = 0.0;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->t > t) continue;
    const double x = beta * (t - it->t);
    if (x > 745.0) break;
    acc += std::exp(-x);
  }
  return acc;
}

}  // namespace

ThinningStats ogata_thinning(ThinningProcess& process, double horizon, Rng& rng, double t0) {
  if (!(horizon > t0)) throw ValidationError("thinning horizon must exceed the start time");
  ThinningStats stats;
  double t = t0;
  while (true) {
    const double m = process.upper_bound(t);
    const double l = process.bound_horizon(t);
    if (!(m > 0.0) || !std::isfinite(m)) {
      std::ostringstream os;
      os << "thinning bound M*(t) = " << m << " at t = " << t << " is not positive and finite";
      throw NumericError(os.str());
    }
    const double dt = rng.exponential(m);
    if (t + dt > horizon) return stats;
    if (dt > l) {
      t += l;
      ++stats.horizon_skips;
      continue;
    }
    t += dt;
    ++stats.candidates;
    const double lam = process.intensity(t);
    const double u = rng.uniform();
    if (lam > m * (1.0 + 1e-9)) {
      std::ostringstream os;
      os << "thinning bound violated at t = " << t << ": lambda = " << lam << " > M = " << m;
      throw NumericError(os.str());
    }
    if (lam / m > u) {
      process.accept(t, rng);
      ++stats.accepted;
    }
  }
}

std::vector<double> ogata_thinning(const HistoryIntensity& intensity, const ThinningBounds& bounds, double horizon,
                                   Rng& rng) {
  FunctionalProcess proc(intensity, bounds);
  ogata_thinning(proc, horizon, rng);
  return std::move(proc.times);
}

EventSequence simulate_stpp(StppProcess& process, double horizon, Rng& rng) {
  StppAdapter adapter(process);
  ogata_thinning(adapter, horizon, rng);
  return EventSequence(std::move(adapter.events), horizon);
}

// ---------------------------------------------------------------- STHP

SthpThinningProcess::SthpThinningProcess(SthpParams params) : p_(std::move(params)) { p_.validate(); }

double SthpThinningProcess::temporal_intensity(std::span<const Event> history, double t) const {
  return p_.mu + p_.alpha * sthp_excitation(history, p_.beta, t);
}

double SthpThinningProcess::upper_bound(std::span<const Event> history, double t) const {
  return temporal_intensity(history, t);
}

double SthpThinningProcess::bound_horizon(std::span<const Event>, double) const { return kInf; }

Vec2 SthpThinningProcess::sample_location(std::span<const Event> history, double t, Rng& rng) const {
  const double total = temporal_intensity(history, t);
  double u = rng.uniform() * total;
  if (u < p_.mu) return rng.normal2(p_.s_mu, p_.cov_g0);
  u -= p_.mu;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->t > t) continue;
    const double w = p_.alpha * std::exp(-p_.beta * (t - it->t));
    if (u < w) return rng.normal2(it->s, p_.cov_g2);
    u -= w;
  }
  // Round-off left u past the last component.
  return history.empty() ? rng.normal2(p_.s_mu, p_.cov_g0) : rng.normal2(history.back().s, p_.cov_g2);
}

// ---------------------------------------------------------------- STSC

StscGridProcess::StscGridProcess(StscParams params, GridSpec grid) : p_(std::move(params)), grid_(grid) {
  p_.validate();
  if (grid.nx < 2 || grid.ny < 2) throw ValidationError("STSC grid needs at least 2x2 cells");
  const Vec2 span = p_.region.hi() - p_.region.lo();
  cell_size_ = Vec2(span.x() / static_cast<double>(grid.nx), span.y() / static_cast<double>(grid.ny));
  const TruncatedGauss2 g0(Gauss2<double>(p_.g0_mean, p_.cov_g0), p_.region);
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t j = 0; j < grid.ny; ++j) {
      const Vec2 c = p_.region.lo() + Vec2((static_cast<double>(i) + 0.5) * cell_size_.x(),
                                           (static_cast<double>(j) + 0.5) * cell_size_.y());
      centres_.push_back(c);
      g0_.push_back(g0.pdf(c));
    }
  }
  suppression_.assign(centres_.size(), 0.0);
}

std::vector<double> StscGridProcess::cell_intensities(double t) const {
  std::vector<double> out(centres_.size());
  for (std::size_t c = 0; c < centres_.size(); ++c) out[c] = p_.mu * std::exp(g0_[c] * p_.beta * t - suppression_[c]);
  return out;
}

double StscGridProcess::temporal_intensity(std::span<const Event>, double t) const {
  double acc = 0.0;
  for (std::size_t c = 0; c < centres_.size(); ++c) acc += std::exp(g0_[c] * p_.beta * t - suppression_[c]);
  return p_.mu * acc / static_cast<double>(centres_.size()) * p_.region.area();
}

double StscGridProcess::bound_horizon(std::span<const Event> history, double t) const {
  return 2.0 / temporal_intensity(history, t);
}

double StscGridProcess::upper_bound(std::span<const Event> history, double t) const {
  return temporal_intensity(history, t + bound_horizon(history, t));
}

Vec2 StscGridProcess::sample_location(std::span<const Event>, double t, Rng& rng) const {
  const std::vector<double> w = cell_intensities(t);
  double total = 0.0;
  for (double v : w) total += v;
  double u = rng.uniform() * total;
  std::size_t pick = w.size() - 1;
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (u < w[c]) {
      pick = c;
      break;
    }
    u -= w[c];
  }
  const Vec2 jitter(rng.uniform(-0.5, 0.5) * cell_size_.x(), rng.uniform(-0.5, 0.5) * cell_size_.y());
  return centres_[pick] + jitter;
}

void StscGridProcess::on_event(std::span<const Event> history) {
  const Gauss2<double> g2(history.back().s, p_.cov_g2);
  const TruncatedGauss2 k(g2, p_.region);
  for (std::size_t c = 0; c < centres_.size(); ++c) suppression_[c] += p_.alpha * k.pdf(centres_[c]);
}

EventSequence simulate_stsc_grid(const StscParams& params, double horizon, Rng& rng, GridSpec grid) {
  StscGridProcess proc(params, grid);
  return simulate_stpp(proc, horizon, rng);
}

// ---------------------------------------------------------------- Poisson

PoissonProcess::PoissonProcess(double rate, SpatialRegion region) : rate_(rate), region_(std::move(region)) {
  if (!(rate > 0.0)) throw ValidationError("Poisson rate must be positive");
  if (!region_.bounded()) throw ValidationError("Poisson process needs a rectangular region");
}

double PoissonProcess::bound_horizon(std::span<const Event>, double) const { return kInf; }

Vec2 PoissonProcess::sample_location(std::span<const Event>, double, Rng& rng) const {
  return {rng.uniform(region_.lo().x(), region_.hi().x()), rng.uniform(region_.lo().y(), region_.hi().y())};
}

// ---------------------------------------------------------------- cluster

std::vector<ClusterEvent> simulate_sthp_cluster_tree(const SthpParams& params, double horizon, Rng& rng,
                                                     const ClusterOptions& opts) {
  params.validate();
  if (!(params.alpha < params.beta)) {
    throw ValidationError("supercritical STHP: branching ratio alpha/beta must be below 1");
  }
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");

  std::vector<ClusterEvent> all;
  // Generation 0: homogeneous Poisson(mu) on (0, T].
  for (double t = rng.exponential(params.mu); t <= horizon; t += rng.exponential(params.mu)) {
    all.push_back({{t, rng.normal2(params.s_mu, params.cov_g0)}, -1});
  }
  std::size_t gen_begin = 0;
  std::size_t gen_end = all.size();
  int generation = 0;
  while (gen_begin < gen_end) {
    if (++generation > opts.max_generations) {
      throw NumericError("cluster simulation exceeded " + std::to_string(opts.max_generations) + " generations");
    }
    for (std::size_t i = gen_begin; i < gen_end; ++i) {
      const double t_parent = all[i].event.t;
      if (t_parent >= horizon) continue;
      OffspringProcess kids(params, t_parent);
      ogata_thinning(kids, horizon, rng, t_parent);
      const Vec2 s_parent = all[i].event.s;
      for (double t : kids.times) all.push_back({{t, rng.normal2(s_parent, params.cov_g2)}, static_cast<long>(i)});
    }
    gen_begin = gen_end;
    gen_end = all.size();
  }
  return all;
}

EventSequence simulate_sthp_cluster(const SthpParams& params, double horizon, Rng& rng, const ClusterOptions& opts,
                                    ClusterStats* stats) {
  std::vector<ClusterEvent> tree = simulate_sthp_cluster_tree(params, horizon, rng, opts);
  if (stats) {
    stats->background = static_cast<std::size_t>(std::count_if(tree.begin(), tree.end(), [](const ClusterEvent& e) { return e.parent < 0; }));
  }
  std::vector<Event> events;
  events.reserve(tree.size());
  for (const auto& e : tree) {
    if (e.event.t > 0.0 && e.event.t <= horizon) events.push_back(e.event);
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return EventSequence(std::move(events), horizon);
}

// ---------------------------------------------------------------- batch

unsigned default_thread_count() {
  if (const char* env = std::getenv("STPP_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<EventSequence> simulate_batch(std::size_t count, std::uint64_t seed,
                                          const std::function<EventSequence(Rng&)>& simulate, unsigned threads) {
  if (threads == 0) threads = default_thread_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::vector<EventSequence> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const Rng root(seed);
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        Rng rng = root.split(i);
        out[i] = simulate(rng);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace stpp
