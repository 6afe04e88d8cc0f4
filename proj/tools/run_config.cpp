#include "run_config.hpp"

#include "stpp/core.hpp"
#include "stpp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace stpp::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && std::isfinite(out);
}

bool parse_long(const std::string& s, long& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

const std::vector<KeySpec>& RunConfig::keys() {
  using enum KeyType;
  static const std::vector<KeySpec> table = {
      {"seed", Count, "0", "master seed; split into named streams"},
      {"threads", Count, "0", "worker threads for simulation (0: STPP_THREADS or all cores)"},

      {"sim.process", Text, "sthp", "process to simulate", {"sthp", "stsc", "poisson"}},
      {"sim.preset", Text, "ds1", "parameter preset", {"ds1", "ds2", "ds3"}},
      {"sim.horizon", PositiveReal, "1000", "observation horizon T"},
      {"sim.seeds", PositiveCount, "1", "number of sequences"},
      {"sim.mu", Real, "0", "override mu (0 keeps the preset)"},
      {"sim.alpha", Real, "0", "override alpha (0 keeps the preset)"},
      {"sim.beta", Real, "0", "override beta (0 keeps the preset)"},
      {"sim.rate", PositiveReal, "1", "Poisson rate per unit time"},
      {"sim.region", RealList, "0,0,1,1", "Poisson region lo_x,lo_y,hi_x,hi_y"},
      {"sim.grid", PositiveCount, "101", "STSC grid cells per side (simulation and evaluation)"},

      {"data.window", PositiveReal, "25", "window length for splitting sequences"},
      {"data.train", Real, "0.8", "train fraction of windows"},
      {"data.val", Real, "0.1", "validation fraction of windows"},
      {"data.test", Real, "0.1", "test fraction of windows"},
      {"data.rescale", Flag, "false", "rescale times to unit mean inter-event gap"},

      {"fit.process", Text, "sthp", "parametric family to fit", {"sthp", "stsc"}},
      {"fit.max_iter", PositiveCount, "500", "BFGS iteration cap"},
      {"fit.grad_tol", PositiveReal, "1e-6", "BFGS gradient-norm tolerance"},

      {"train.d_model", PositiveCount, "128", "embedding width"},
      {"train.layers", Count, "3", "attention layers"},
      {"train.heads", PositiveCount, "2", "attention heads"},
      {"train.d_hidden", PositiveCount, "128", "attention feed-forward width"},
      {"train.d_z", PositiveCount, "128", "latent dimension"},
      {"train.dec_hidden", PositiveCount, "128", "decoder hidden width"},
      {"train.dec_layers", Count, "2", "decoder hidden layers"},
      {"train.J", Count, "50", "representative points"},
      {"train.max_history", PositiveCount, "64", "most recent events kept per window"},
      {"train.pos_scale", PositiveReal, "100", "positional-encoding scale"},
      {"train.kl_weight", Real, "1e-3", "weight of the KL term"},
      {"train.lr", Real, "0.01", "Adam learning rate"},
      {"train.epochs", PositiveCount, "200", "training epochs"},
      {"train.batch", PositiveCount, "128", "windows per mini-batch"},
      {"train.grad_clip", Real, "10", "clip each batch gradient to this global norm (0: off)"},
      {"train.inflate", Real, "0.1", "bounding-box inflation for representative points"},

      {"eval.grid.nx", PositiveCount, "50", "Hellinger grid cells in x"},
      {"eval.grid.ny", PositiveCount, "50", "Hellinger grid cells in y"},
      {"eval.hd_times", PositiveCount, "10", "query times per window for Hellinger"},
      {"eval.hd_span", PositiveReal, "2", "span after the last event holding the Hellinger query times"},
      {"eval.mape_points", PositiveCount, "100", "sample times per window for MAPE"},
      {"eval.mape_span", Real, "0", "span for MAPE sample times (0: data.window)"},
      {"eval.samples", Count, "0", "latent samples for DeepSTPP (0: posterior mean)"},

      {"predict.split", Text, "test", "windows to predict", {"train", "val", "test", "all"}},
      {"predict.samples", Count, "0", "latent samples for DeepSTPP (0: posterior mean)"},

      {"grid.split", Text, "test", "split holding the window", {"train", "val", "test", "all"}},
      {"grid.window", Count, "0", "window index within the split"},
      {"grid.times", RealList, "0.1,0.5,1", "query offsets after the window's last event"},
      {"grid.nx", PositiveCount, "50", "cells in x"},
      {"grid.ny", PositiveCount, "50", "cells in y"},
      {"grid.normalized", Flag, "true", "write f*(s|t) instead of lambda*(s,t)"},
  };
  return table;
}

const KeySpec& RunConfig::spec(const std::string& key) {
  const auto& t = keys();
  const auto it = std::find_if(t.begin(), t.end(), [&](const KeySpec& k) { return k.key == key; });
  if (it == t.end()) throw ValidationError("unknown config key '" + key + "'");
  return *it;
}

RunConfig::RunConfig() {
  for (const KeySpec& k : keys()) values_[k.key] = k.fallback;
}

void RunConfig::set(const std::string& key, const std::string& raw, const std::string& origin) {
  const auto& t = keys();
  const auto it = std::find_if(t.begin(), t.end(), [&](const KeySpec& k) { return k.key == key; });
  if (it == t.end()) throw ValidationError(origin + ": unknown config key '" + key + "'");
  const std::string value = trim(raw);
  const auto bad = [&](const std::string& what) {
    return ValidationError(origin + ": " + key + " = '" + value + "': " + what);
  };
  double d = 0.0;
  long n = 0;
  switch (it->type) {
    case KeyType::Real:
      if (!parse_double(value, d)) throw bad("expected a finite number");
      break;
    case KeyType::PositiveReal:
      if (!parse_double(value, d) || !(d > 0.0)) throw bad("expected a positive number");
      break;
    case KeyType::Count:
      if (!parse_long(value, n) || n < 0) throw bad("expected a non-negative integer");
      break;
    case KeyType::PositiveCount:
      if (!parse_long(value, n) || n <= 0) throw bad("expected a positive integer");
      break;
    case KeyType::Flag:
      if (value != "true" && value != "false") throw bad("expected true or false");
      break;
    case KeyType::Text:
      if (!it->choices.empty() && std::find(it->choices.begin(), it->choices.end(), value) == it->choices.end()) {
        throw bad("expected one of: " + join(it->choices));
      }
      break;
    case KeyType::RealList:
      for (const std::string& item : split_list(value)) {
        if (!parse_double(item, d)) throw bad("expected comma-separated numbers");
      }
      break;
  }
  values_[key] = value;
  explicit_[key] = true;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::stringstream in(io::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string origin = path.string() + " line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(origin + ": expected 'key = value'");
    set(trim(line.substr(0, eq)), line.substr(eq + 1), origin);
  }
}

const std::string& RunConfig::text(const std::string& key) const {
  spec(key);
  return values_.at(key);
}

double RunConfig::real(const std::string& key) const {
  double d = 0.0;
  parse_double(text(key), d);
  return d;
}

long RunConfig::count(const std::string& key) const {
  long n = 0;
  parse_long(text(key), n);
  return n;
}

bool RunConfig::flag(const std::string& key) const { return text(key) == "true"; }

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(text(key))) {
    double d = 0.0;
    parse_double(item, d);
    out.push_back(d);
  }
  return out;
}

bool RunConfig::is_default(const std::string& key) const { return !explicit_.contains(key); }

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

}  // namespace stpp::cli
