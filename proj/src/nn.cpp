#include "stpp/nn.hpp"

#include "stpp/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace stpp::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

Linear::Linear(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
    : w_(&ps.add(name + ".w", glorot(in, out, rng))), b_(&ps.add(name + ".b", Mat::Zero(1, out))) {}

Tensor Linear::operator()(Tape& tape, const Tensor& x) const {
  return nd::add(nd::matmul(x, tape.param(*w_)), tape.param(*b_));
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, Eigen::Index dim)
    : gain_(&ps.add(name + ".gain", Mat::Ones(1, dim))), bias_(&ps.add(name + ".bias", Mat::Zero(1, dim))) {}

Tensor LayerNorm::operator()(Tape& tape, const Tensor& x) const {
  return nd::add(nd::mul(nd::layer_norm(x), tape.param(*gain_)), tape.param(*bias_));
}

Mlp::Mlp(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden, int hidden_layers,
         Eigen::Index out, Rng& rng) {
  if (hidden_layers < 0) throw ValidationError("MLP depth must be non-negative");
  Eigen::Index d = in;
  for (int l = 0; l < hidden_layers; ++l) {
    layers_.emplace_back(ps, name + ".l" + std::to_string(l), d, hidden, rng);
    d = hidden;
  }
  layers_.emplace_back(ps, name + ".out", d, out, rng);
}

Tensor Mlp::operator()(Tape& tape, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = nd::relu(layers_[l](tape, h));
  return layers_.back()(tape, h);
}

void EncoderConfig::validate() const {
  if (d_model <= 0 || layers < 0 || heads <= 0 || d_hidden <= 0) {
    throw ValidationError("encoder config: sizes must be positive");
  }
  if (d_model % heads != 0) {
    throw ValidationError("encoder config: d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
  }
}

AttentionEncoder::AttentionEncoder(ParameterSet& ps, const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.d_model;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    Block b;
    b.ln1 = LayerNorm(ps, p + ".ln1", d);
    b.q = Linear(ps, p + ".q", d, d, rng);
    b.k = Linear(ps, p + ".k", d, d, rng);
    b.v = Linear(ps, p + ".v", d, d, rng);
    b.o = Linear(ps, p + ".o", d, d, rng);
    b.ln2 = LayerNorm(ps, p + ".ln2", d);
    b.ff1 = Linear(ps, p + ".ff1", d, cfg.d_hidden, rng);
    b.ff2 = Linear(ps, p + ".ff2", cfg.d_hidden, d, rng);
    blocks_.push_back(b);
  }
  final_ln_ = LayerNorm(ps, name + ".final_ln", d);
}

Tensor AttentionEncoder::attention(Tape& tape, const Block& b, const Tensor& x) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index dh = cfg_.d_model / cfg_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = b.q(tape, x), k = b.k(tape, x), v = b.v(tape, x);
  std::vector<Tensor> heads;
  for (int h = 0; h < cfg_.heads; ++h) {
    const Tensor qh = nd::slice(q, 0, n, h * dh, dh);
    const Tensor kh = nd::slice(k, 0, n, h * dh, dh);
    const Tensor vh = nd::slice(v, 0, n, h * dh, dh);
    const Tensor scores = nd::scale(nd::matmul(qh, nd::transpose(kh)), inv_sqrt);
    heads.push_back(nd::matmul(nd::softmax(scores, nd::Axis::cols), vh));
  }
  const Tensor merged = heads.size() == 1 ? heads.front() : nd::concat(heads, nd::Axis::cols);
  return b.o(tape, merged);
}

Tensor AttentionEncoder::operator()(Tape& tape, const Tensor& x) const {
  if (x.rows() < 1) throw ValidationError("encoder input has no rows");
  if (x.cols() != cfg_.d_model) {
    throw nd::ShapeError("encoder input width " + std::to_string(x.cols()) + " != d_model " +
                         std::to_string(cfg_.d_model));
  }
  Tensor h = x;
  for (const Block& b : blocks_) {
    h = nd::add(h, attention(tape, b, b.ln1(tape, h)));
    h = nd::add(h, b.ff2(tape, nd::relu(b.ff1(tape, b.ln2(tape, h)))));
  }
  return final_ln_(tape, h);
}

Mat sinusoidal_positions(std::span<const double> times, Eigen::Index d_model, double scale) {
  if (d_model <= 0 || d_model % 2 != 0) throw ValidationError("sinusoidal positions need an even d_model");
  const auto n = static_cast<Eigen::Index>(times.size());
  Mat pe(n, d_model);
  const double t1 = n ? times.front() : 0.0;
  const double span = n ? times.back() - t1 : 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = span > 0.0 ? (times[static_cast<std::size_t>(i)] - t1) / span * scale : 0.0;
    for (Eigen::Index k = 0; k < d_model / 2; ++k) {
      const double w = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(d_model));
      pe(i, 2 * k) = std::sin(p * w);
      pe(i, 2 * k + 1) = std::cos(p * w);
    }
  }
  return pe;
}

Adam::Adam(ParameterSet& params, AdamOptions opts) : params_(params), opts_(opts) {
  if (!(opts.lr >= 0.0) || !(opts.beta1 >= 0.0 && opts.beta1 < 1.0) || !(opts.beta2 >= 0.0 && opts.beta2 < 1.0) ||
      !(opts.eps > 0.0)) {
    throw ValidationError("invalid Adam options");
  }
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  if (m_.size() != params_.size()) throw ValidationError("Adam: parameter set changed after construction");
  for (const auto& p : params_) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw nd::ShapeError("Adam: gradient shape mismatch for " + p->name);
    }
    if (!p->grad.allFinite()) throw NumericError("Adam: non-finite gradient in " + p->name);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& p : params_) {
    Mat& m = m_[i];
    Mat& v = v_[i];
    m = opts_.beta1 * m + (1.0 - opts_.beta1) * p->grad;
    v = opts_.beta2 * v + (1.0 - opts_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= opts_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts_.eps);
    ++i;
  }
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& stem, const nlohmann::json& extra) {
  std::string bin;
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : params) {
    const std::size_t bytes = static_cast<std::size_t>(p->value.size()) * sizeof(double);
    bin.append(reinterpret_cast<const char*>(p->value.data()), bytes);
    tensors.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}, {"offset", offset}});
    offset += static_cast<std::size_t>(p->value.size());
  }
  nlohmann::json manifest = {{"format", "float64-le"}, {"count", offset}, {"tensors", tensors}, {"extra", extra}};
  std::filesystem::path bin_path = stem;
  bin_path += ".bin";
  std::filesystem::path json_path = stem;
  json_path += ".json";
  io::write_file_atomic(bin_path, bin);
  io::write_file_atomic(json_path, manifest.dump(2) + "\n");
}

nlohmann::json load_checkpoint(ParameterSet& params, const std::filesystem::path& stem) {
  std::filesystem::path bin_path = stem;
  bin_path += ".bin";
  std::filesystem::path json_path = stem;
  json_path += ".json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest " + json_path.string() + ": " + e.what());
  }
  const std::string bin = io::read_file(bin_path);
  const std::size_t count = bin.size() / sizeof(double);
  if (bin.size() % sizeof(double) != 0) throw ValidationError("checkpoint data size is not a multiple of 8");
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) {
    throw ValidationError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (const auto& entry : tensors) {
    const std::string name = entry.at("name").get<std::string>();
    Parameter& p = params.get(name);
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw nd::ShapeError("checkpoint shape mismatch for " + name);
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(rows * cols) > count) {
      throw ValidationError("checkpoint tensor " + name + " runs past the data file");
    }
    std::memcpy(p.value.data(), bin.data() + offset * sizeof(double), static_cast<std::size_t>(rows * cols) * sizeof(double));
  }
  return manifest.value("extra", nlohmann::json::object());
}

}  // namespace stpp::nn
