#include "commands.hpp"

#include "run_config.hpp"

#include "stpp/deepstpp.hpp"
#include "stpp/eval.hpp"
#include "stpp/io.hpp"
#include "stpp/parametric.hpp"
#include "stpp/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace stpp::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Files written by a command; removed again unless the command commits.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_ = true;
    } else if (!fs::is_directory(dir_)) {
      throw ValidationError("output path " + dir_.string() + " is not a directory");
    }
  }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const fs::path& f : files_) fs::remove(f, ec);
    if (created_) fs::remove(dir_, ec);
  }

  const fs::path& dir() const { return dir_; }
  fs::path write(const std::string& name, const std::string& content) {
    fs::path p = dir_ / name;
    files_.push_back(p);
    io::write_file_atomic(p, content);
    return p;
  }
  // For files written by library code (checkpoints).
  void track(const fs::path& p) { files_.push_back(p); }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_ = false;
  bool committed_ = false;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json region_json(const SpatialRegion& r) { return {r.lo().x(), r.lo().y(), r.hi().x(), r.hi().y()}; }

SpatialRegion region_from(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 4) throw ValidationError(what + " needs four numbers lo_x,lo_y,hi_x,hi_y");
  return SpatialRegion::rectangle(Vec2(v[0], v[1]), Vec2(v[2], v[3]));
}

// ---------------------------------------------------------------- data

struct Window {
  WindowPair pair;
  std::size_t sequence;
};

struct Dataset {
  std::vector<EventSequence> sequences;
  std::vector<double> time_factors;  // original times were divided by these
  std::vector<Window> train, val, test;

  std::vector<WindowPair> pairs(const std::vector<Window>& ws) const {
    std::vector<WindowPair> out;
    for (const Window& w : ws) out.push_back(w.pair);
    return out;
  }
  const std::vector<Window>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    return test;
  }
  std::vector<Window> all() const {
    std::vector<Window> out = train;
    out.insert(out.end(), val.begin(), val.end());
    out.insert(out.end(), test.begin(), test.end());
    return out;
  }
  SpatialRegion region(double inflate) const {
    std::vector<Event> ev;
    for (const auto& s : sequences) ev.insert(ev.end(), s.events().begin(), s.events().end());
    return bounding_region(ev, inflate);
  }
};

Dataset load_data(const std::vector<std::string>& paths, const RunConfig& cfg) {
  Dataset d;
  const SplitSpec spec{cfg.real("data.window"), cfg.real("data.train"), cfg.real("data.val"), cfg.real("data.test"),
                       static_cast<std::uint64_t>(cfg.count("seed"))};
  for (const std::string& p : paths) {
    EventSequence seq = io::read_events_jsonl(fs::path(p));
    const double factor = cfg.flag("data.rescale") ? rescale_to_unit_gap(seq) : 1.0;
    const WindowSplit ws = window_split(seq, spec);
    const std::size_t k = d.sequences.size();
    for (const auto& w : ws.train) d.train.push_back({w, k});
    for (const auto& w : ws.val) d.val.push_back({w, k});
    for (const auto& w : ws.test) d.test.push_back({w, k});
    d.sequences.push_back(std::move(seq));
    d.time_factors.push_back(factor);
  }
  return d;
}

// ---------------------------------------------------------------- models

struct PoissonSpec {
  double rate;
  SpatialRegion region;
};

class Model {
 public:
  static Model load(const fs::path& path, const RunConfig& cfg) {
    Model m;
    m.grid_ = GridSpec{static_cast<std::size_t>(cfg.count("sim.grid")), static_cast<std::size_t>(cfg.count("sim.grid"))};
    fs::path stem = path;
    if (path.extension() == ".json") stem.replace_extension();
    fs::path manifest = stem;
    manifest += ".json";
    if (fs::is_regular_file(path) && path.extension() == ".json") {
      json j;
      try {
        j = json::parse(io::read_file(path));
      } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
      }
      if (j.contains("params") && j["params"].is_object()) j = j["params"];  // simulate manifest
      if (j.contains("process")) {
        m.set_params(j);
        return m;
      }
      if (!j.contains("tensors")) throw ValidationError(path.string() + " is neither parameters nor a checkpoint");
    } else if (!fs::is_regular_file(manifest)) {
      throw ValidationError("model " + path.string() + " not found");
    }
    m.deep_ = std::make_shared<deep::DeepStpp>(deep::DeepStpp::load(stem));
    m.kind_ = "deepstpp";
    return m;
  }

  const std::string& kind() const { return kind_; }

  // Parametric models: rescale the time unit (t' = t / factor).
  Model in_time_unit(double factor) const {
    Model m = *this;
    if (factor == 1.0) return m;
    if (m.sthp_) {
      m.sthp_->mu *= factor;
      m.sthp_->alpha *= factor;
      m.sthp_->beta *= factor;
    } else if (m.stsc_) {
      m.stsc_->mu *= factor;
      m.stsc_->beta *= factor;
    } else if (m.poisson_) {
      m.poisson_->rate *= factor;
    }
    return m;
  }

  std::unique_ptr<SpatioTemporalModel> condition(const EventSequence& window, Rng& rng, int samples) const {
    if (sthp_) return std::make_unique<SthpModel>(*sthp_, window);
    if (stsc_) return std::make_unique<StscModel>(*stsc_, window, grid_);
    if (poisson_) return std::make_unique<PoissonModel>(poisson_->rate, poisson_->region, window.back().t);
    return std::make_unique<deep::DeepStppModel>(deep_->conditional_model(window, rng, samples));
  }

  deep::Prediction predict(const EventSequence& window, Rng& rng, int samples) const {
    if (deep_) return deep_->predict_event(window, rng, samples);
    const auto m = condition(window, rng, samples);
    return {predict_next_time(*m), predict_next_location(*m)};
  }

 private:
  void set_params(const json& j) {
    const std::string process = j.at("process").get<std::string>();
    if (process == "sthp") {
      sthp_ = sthp_from_json(j);
    } else if (process == "stsc") {
      stsc_ = stsc_from_json(j);
    } else if (process == "poisson") {
      const auto r = j.at("region").get<std::vector<double>>();
      poisson_ = PoissonSpec{j.at("rate").get<double>(), region_from(r, "poisson region")};
    } else {
      throw ValidationError("unknown process '" + process + "' in parameter file");
    }
    kind_ = process;
  }

  std::string kind_;
  std::optional<SthpParams> sthp_;
  std::optional<StscParams> stsc_;
  std::optional<PoissonSpec> poisson_;
  std::shared_ptr<deep::DeepStpp> deep_;
  GridSpec grid_;
};

// ---------------------------------------------------------------- commands

struct Paths {
  std::string config;
  std::vector<std::string> data;
  std::string out;
  std::string model;
  std::string truth;
};

int cmd_simulate(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const std::string process = cfg.text("sim.process");
  const std::string preset = cfg.text("sim.preset");
  const double horizon = cfg.real("sim.horizon");
  const auto count = static_cast<std::size_t>(cfg.count("sim.seeds"));
  const auto seed = static_cast<std::uint64_t>(cfg.count("seed"));
  const auto g = static_cast<std::size_t>(cfg.count("sim.grid"));
  const auto override_value = [&](const char* key, double& field) {
    const double v = cfg.real(key);
    if (v < 0.0) throw ValidationError(std::string(key) + " must be positive");
    if (v > 0.0) field = v;
  };

  json params;
  std::function<EventSequence(Rng&)> simulate;
  if (process == "sthp") {
    SthpParams p = SthpParams::preset(preset);
    override_value("sim.mu", p.mu);
    override_value("sim.alpha", p.alpha);
    override_value("sim.beta", p.beta);
    p.validate();
    if (p.alpha >= p.beta) {
      throw ValidationError("refusing supercritical STHP: branching ratio alpha/beta = " + num(p.alpha / p.beta) +
                            " must be below 1");
    }
    params = to_json(p);
    simulate = [p, horizon](Rng& rng) {
      Rng r = rng.stream("sim");
      return simulate_sthp_cluster(p, horizon, r);
    };
  } else if (process == "stsc") {
    StscParams p = StscParams::preset(preset);
    override_value("sim.mu", p.mu);
    override_value("sim.alpha", p.alpha);
    override_value("sim.beta", p.beta);
    p.validate();
    params = to_json(p);
    simulate = [p, horizon, g](Rng& rng) {
      Rng r = rng.stream("sim");
      return simulate_stsc_grid(p, horizon, r, {g, g});
    };
  } else {
    const double rate = cfg.real("sim.rate");
    const SpatialRegion region = region_from(cfg.reals("sim.region"), "sim.region");
    params = {{"process", "poisson"}, {"rate", rate}, {"region", region_json(region)}};
    simulate = [rate, region, horizon](Rng& rng) {
      Rng r = rng.stream("sim");
      PoissonProcess proc(rate, region);
      return simulate_stpp(proc, horizon, r);
    };
  }

  const std::vector<EventSequence> seqs =
      simulate_batch(count, seed, simulate, static_cast<unsigned>(cfg.count("threads")));
  Outputs outputs(paths.out);
  json files = json::array(), counts = json::array();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::ostringstream name;
    name << "seq_" << std::setw(3) << std::setfill('0') << i << ".jsonl";
    std::ostringstream body;
    io::write_events_jsonl(body, seqs[i]);
    outputs.write(name.str(), body.str());
    files.push_back(name.str());
    counts.push_back(seqs[i].size());
  }
  const json manifest = {{"process", process}, {"preset", process == "poisson" ? json(nullptr) : json(preset)},
                         {"params", params},   {"seed", seed},
                         {"horizon", horizon}, {"sequences", count},
                         {"files", files},     {"counts", counts},
                         {"timestamp", utc_timestamp()}};
  outputs.write("manifest.json", manifest.dump(2) + "\n");
  outputs.commit();
  out << "simulated " << count << " " << process << " sequence(s) on (0, " << horizon << "] into " << paths.out << "\n";
  return kOk;
}

int cmd_fit(const RunConfig& cfg, const Paths& paths, std::ostream& out, std::ostream& err) {
  if (paths.data.size() != 1) throw ValidationError("fit-mle takes exactly one --data sequence");
  EventSequence seq = io::read_events_jsonl(fs::path(paths.data.front()));
  if (cfg.flag("data.rescale")) rescale_to_unit_gap(seq);
  FitOptions opts;
  opts.max_iter = static_cast<int>(cfg.count("fit.max_iter"));
  opts.grad_tol = cfg.real("fit.grad_tol");

  json params;
  std::vector<FitTraceRow> trace;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  if (cfg.text("fit.process") == "sthp") {
    const SthpFit fit = fit_sthp_mle(seq, sthp_default_init(seq), opts);
    params = to_json(fit.params);
    std::tie(trace, loglik, iterations, converged) = std::tuple(fit.trace, fit.loglik, fit.iterations, fit.converged);
  } else {
    const auto g = static_cast<std::size_t>(cfg.count("sim.grid"));
    const StscFit fit = fit_stsc_mle(seq, StscParams::preset(cfg.text("sim.preset")), {g, g}, opts);
    params = to_json(fit.params);
    std::tie(trace, loglik, iterations, converged) = std::tuple(fit.trace, fit.loglik, fit.iterations, fit.converged);
  }
  params["fit"] = {{"loglik", loglik}, {"iterations", iterations}, {"converged", converged}};

  Outputs outputs(paths.out);
  outputs.write("params.json", params.dump(2) + "\n");
  std::string csv = "iteration,loglik,grad_norm,step\n";
  for (const FitTraceRow& r : trace) {
    csv += std::to_string(r.iteration) + "," + num(r.loglik) + "," + num(r.grad_norm) + "," + num(r.step) + "\n";
  }
  outputs.write("trace.csv", csv);
  outputs.commit();
  if (!converged) err << "fit-mle: warning: not converged after " << iterations << " iterations; best iterate kept\n";
  out << "fit " << cfg.text("fit.process") << ": loglik " << num(loglik) << " after " << iterations
      << " iterations\n";
  return kOk;
}

deep::DeepStppConfig deep_config(const RunConfig& cfg) {
  deep::DeepStppConfig c;
  c.d_model = cfg.count("train.d_model");
  c.layers = static_cast<int>(cfg.count("train.layers"));
  c.heads = static_cast<int>(cfg.count("train.heads"));
  c.d_hidden = cfg.count("train.d_hidden");
  c.d_z = cfg.count("train.d_z");
  c.dec_hidden = cfg.count("train.dec_hidden");
  c.dec_layers = static_cast<int>(cfg.count("train.dec_layers"));
  c.J = cfg.count("train.J");
  c.max_history = cfg.count("train.max_history");
  c.pos_scale = cfg.real("train.pos_scale");
  c.kl_weight = cfg.real("train.kl_weight");
  c.lr = cfg.real("train.lr");
  c.epochs = static_cast<int>(cfg.count("train.epochs"));
  c.batch_size = static_cast<int>(cfg.count("train.batch"));
  c.grad_clip = cfg.real("train.grad_clip");
  c.seed = static_cast<std::uint64_t>(cfg.count("seed"));
  c.validate();
  return c;
}

int cmd_train(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const Dataset data = load_data(paths.data, cfg);
  if (data.train.empty()) throw ValidationError("train: the training split is empty");
  const deep::DeepStppConfig dc = deep_config(cfg);
  std::vector<Event> train_events;
  for (const Window& w : data.train) {
    train_events.insert(train_events.end(), w.pair.input.events().begin(), w.pair.input.events().end());
    train_events.push_back(w.pair.target);
  }
  deep::DeepStpp model(dc, bounding_region(train_events, cfg.real("train.inflate")));

  Outputs outputs(paths.out);
  deep::TrainOptions opts;
  const int every = std::max(1, dc.epochs / 10);
  opts.on_epoch = [&](const deep::TrainTraceRow& r) {
    if (r.epoch % every == 0 || r.epoch == dc.epochs) {
      out << "epoch " << r.epoch << ": train " << num(r.train_loss) << " val " << num(r.val_loss) << "\n";
    }
    return true;
  };
  const deep::TrainResult res = deep::train(model, data.pairs(data.train), data.pairs(data.val), opts);

  outputs.track(outputs.dir() / "model.bin");
  outputs.track(outputs.dir() / "model.json");
  model.save(outputs.dir() / "model");
  std::string csv = "epoch,train_loss,val_loss,train_loglik,train_kl\n";
  for (const auto& r : res.trace) {
    csv += std::to_string(r.epoch) + "," + num(r.train_loss) + "," + num(r.val_loss) + "," + num(r.train_loglik) +
           "," + num(r.train_kl) + "\n";
  }
  outputs.write("loss_trace.csv", csv);
  outputs.commit();
  out << "best epoch " << res.best_epoch << " (val " << num(res.best_val_loss) << ")";
  if (res.clamp_warnings) out << "; intensity clamped " << res.clamp_warnings << " time(s)";
  out << "\n";
  return kOk;
}

json evaluate_split(const std::vector<Window>& windows, const Dataset& data, const Model& model,
                    const std::optional<Model>& truth, const RunConfig& cfg, const SpatialRegion& region,
                    const Rng& root, std::size_t offset) {
  const int samples = static_cast<int>(cfg.count("eval.samples"));
  const auto nx = static_cast<std::size_t>(cfg.count("eval.grid.nx"));
  const auto ny = static_cast<std::size_t>(cfg.count("eval.grid.ny"));
  const double mape_span = cfg.real("eval.mape_span") > 0.0 ? cfg.real("eval.mape_span") : cfg.real("data.window");
  double ll_space = 0.0, ll_time = 0.0, hd = 0.0, mape = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& w = windows[i];
    Rng rng = root.split(offset + i);
    const auto m = model.condition(w.pair.input, rng, samples);
    const eval::LoglikSplit ll = eval::loglik_split(*m, w.pair.target);
    if (ll.valid) {
      ll_space += ll.ll_space;
      ll_time += ll.ll_time;
      ++valid;
    }
    if (truth) {
      Rng trng = root.split(offset + i);
      const auto tm = truth->in_time_unit(data.time_factors[w.sequence]).condition(w.pair.input, trng, 0);
      const double t_n = w.pair.input.back().t;
      const auto hd_times = eval::query_times(t_n, cfg.real("eval.hd_span"),
                                              static_cast<std::size_t>(cfg.count("eval.hd_times")));
      hd += eval::mean_hellinger(*m, *tm, hd_times, region, nx, ny);
      const auto mape_times =
          eval::query_times(t_n, mape_span, static_cast<std::size_t>(cfg.count("eval.mape_points")));
      mape += eval::temporal_mape([&](double t) { return m->temporal_intensity(t); },
                                  [&](double t) { return tm->temporal_intensity(t); }, mape_times);
    }
  }
  const auto n = static_cast<double>(windows.size());
  const auto mean_or_null = [](double sum, double count) { return count > 0 ? json(sum / count) : json(nullptr); };
  json j = {{"windows", windows.size()},
            {"invalid", windows.size() - valid},
            {"ll_space", mean_or_null(ll_space, double(valid))},
            {"ll_time", mean_or_null(ll_time, double(valid))}};
  j["hd"] = truth ? mean_or_null(hd, n) : json(nullptr);
  j["mape"] = truth ? mean_or_null(mape, n) : json(nullptr);
  return j;
}

int cmd_evaluate(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const Dataset data = load_data(paths.data, cfg);
  const Model model = Model::load(paths.model, cfg);
  std::optional<Model> truth;
  if (!paths.truth.empty()) truth = Model::load(paths.truth, cfg);
  const SpatialRegion region = data.region(cfg.real("train.inflate"));
  const Rng root = Rng(static_cast<std::uint64_t>(cfg.count("seed"))).stream("eval");
  json metrics = {{"model", model.kind()}};
  std::size_t offset = 0;
  for (const char* split : {"train", "val", "test"}) {
    const auto& ws = data.split(split);
    metrics[split] = evaluate_split(ws, data, model, truth, cfg, region, root, offset);
    offset += ws.size();
  }
  Outputs outputs(paths.out);
  outputs.write("metrics.json", metrics.dump(2) + "\n");
  outputs.commit();
  out << metrics["test"].dump() << "\n";
  return kOk;
}

int cmd_predict(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const Dataset data = load_data(paths.data, cfg);
  const Model model = Model::load(paths.model, cfg);
  const std::string split = cfg.text("predict.split");
  const std::vector<Window> ws = split == "all" ? data.all() : data.split(split);
  const Rng root = Rng(static_cast<std::uint64_t>(cfg.count("seed"))).stream("predict");
  std::string body;
  double t_err = 0.0, s_err = 0.0;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    Rng rng = root.split(i);
    const EventSequence& input = ws[i].pair.input;
    const Event& target = ws[i].pair.target;
    const deep::Prediction p = model.predict(input, rng, static_cast<int>(cfg.count("predict.samples")));
    const json row = {{"window", i},        {"t_n", input.back().t},   {"t", p.t},
                      {"x", p.s.x()},       {"y", p.s.y()},            {"target_t", target.t},
                      {"target_x", target.s.x()}, {"target_y", target.s.y()}};
    body += row.dump() + "\n";
    t_err += std::abs(p.t - target.t);
    s_err += (p.s - target.s).norm();
  }
  Outputs outputs(paths.out);
  outputs.write("predictions.jsonl", body);
  outputs.commit();
  const double n = std::max<double>(1.0, double(ws.size()));
  out << "predicted " << ws.size() << " window(s); mean |t error| " << num(t_err / n) << ", mean location error "
      << num(s_err / n) << "\n";
  return kOk;
}

int cmd_grid(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const Dataset data = load_data(paths.data, cfg);
  const Model model = Model::load(paths.model, cfg);
  const std::string split = cfg.text("grid.split");
  const std::vector<Window> ws = split == "all" ? data.all() : data.split(split);
  const auto k = static_cast<std::size_t>(cfg.count("grid.window"));
  if (k >= ws.size()) {
    throw ValidationError("grid.window " + std::to_string(k) + " out of range: split '" + split + "' has " +
                          std::to_string(ws.size()) + " window(s)");
  }
  Rng rng = Rng(static_cast<std::uint64_t>(cfg.count("seed"))).stream("grid");
  const auto m = model.condition(ws[k].pair.input, rng, 0);
  const SpatialRegion region = data.region(cfg.real("train.inflate"));
  const double t_n = ws[k].pair.input.back().t;
  Outputs outputs(paths.out);
  json index = json::array();
  const std::vector<double> offsets = cfg.reals("grid.times");
  for (std::size_t q = 0; q < offsets.size(); ++q) {
    if (offsets[q] < 0.0) throw ValidationError("grid.times must be non-negative offsets");
    const eval::DensityGrid g =
        eval::density_grid_from_model(*m, t_n + offsets[q], region, static_cast<std::size_t>(cfg.count("grid.nx")),
                                      static_cast<std::size_t>(cfg.count("grid.ny")), cfg.flag("grid.normalized"));
    const std::string name = "grid_" + std::to_string(q) + ".csv";
    outputs.write(name, eval::to_csv(g));
    index.push_back({{"file", name}, {"t", t_n + offsets[q]}});
  }
  outputs.write("grids.json", json({{"window", k}, {"split", split}, {"t_n", t_n}, {"grids", index}}).dump(2) + "\n");
  outputs.commit();
  out << "wrote " << offsets.size() << " grid(s) to " << paths.out << "\n";
  return kOk;
}

std::string section_of(const std::string& key) {
  const auto dot = key.find('.');
  return dot == std::string::npos ? "general" : key.substr(0, dot);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal point processes: simulation, MLE fitting, DeepSTPP training and evaluation", "stpp"};
  app.require_subcommand(1, 1);
  app.footer("Every key can be set in a --config file as 'key = value'; --key value overrides the file.");

  Paths paths;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  struct Sub {
    const char* name;
    const char* help;
    bool data, model, truth;
  };
  const Sub subs[] = {
      {"simulate", "simulate sequences from sthp, stsc or poisson", false, false, false},
      {"fit-mle", "fit parametric parameters by maximum likelihood", true, false, false},
      {"train", "train DeepSTPP on windows of the data", true, false, false},
      {"evaluate", "log-likelihood, Hellinger and MAPE metrics per split", true, true, true},
      {"predict", "predict the next event of each window", true, true, false},
      {"grid", "export spatial intensity grids for one window", true, true, false},
  };
  std::map<std::string, CLI::App*> apps;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    apps[s.name] = sub;
    sub->add_option("--config", paths.config, "config file of 'key = value' lines")->check(CLI::ExistingFile);
    sub->add_option("--out", paths.out, "output directory")->required();
    if (s.data) sub->add_option("--data", paths.data, "event sequence JSONL (repeatable)")->required()->check(CLI::ExistingFile);
    if (s.model) sub->add_option("--model", paths.model, "parameter JSON or DeepSTPP checkpoint")->required();
    if (s.truth) sub->add_option("--truth", paths.truth, "ground-truth parameter JSON or simulate manifest");
    for (const KeySpec& k : RunConfig::keys()) {
      std::string help = k.help;
      if (!k.choices.empty()) {
        help += " {";
        for (std::size_t i = 0; i < k.choices.size(); ++i) help += (i ? "," : "") + k.choices[i];
        help += "}";
      }
      help += " [default: " + k.fallback + "]";
      CLI::Option* opt = sub->add_option("--" + k.key, values[k.key], help)->group(section_of(k.key) + " keys");
      options[std::string(s.name) + "/" + k.key] = opt;
    }
  }

  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "stpp: " << e.what() << "\n";
    return kValidation;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg;
    if (!paths.config.empty()) cfg.load_file(paths.config);
    for (const KeySpec& k : RunConfig::keys()) {
      if (options.at(name + "/" + k.key)->count() > 0) cfg.set(k.key, values[k.key], "--" + k.key);
    }
    if (name == "simulate") return cmd_simulate(cfg, paths, out);
    if (name == "fit-mle") return cmd_fit(cfg, paths, out, err);
    if (name == "train") return cmd_train(cfg, paths, out);
    if (name == "evaluate") return cmd_evaluate(cfg, paths, out);
    if (name == "predict") return cmd_predict(cfg, paths, out);
    return cmd_grid(cfg, paths, out);
  } catch (const ValidationError& e) {
    err << "stpp " << name << ": error: " << e.what() << "\n";
    return kValidation;
  } catch (const NumericError& e) {
    err << "stpp " << name << ": numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "stpp " << name << ": " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace stpp::cli
