#ifndef STPP_NN_HPP
#define STPP_NN_HPP

#include "stpp/ndiff.hpp"
#include "stpp/rng.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stpp::nn {

using nd::Mat;
using nd::Parameter;
using nd::ParameterSet;
using nd::Tape;
using nd::Tensor;

// Glorot-uniform initialization.
Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// y = x W + b, W: in x out, b: 1 x out.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x) const;
  Eigen::Index in() const { return w_->value.rows(); }
  Eigen::Index out() const { return w_->value.cols(); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

// Row-wise layer norm with learned gain and bias.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, Eigen::Index dim);
  Tensor operator()(Tape& tape, const Tensor& x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* bias_ = nullptr;
};

// Feed-forward net with `hidden_layers` ReLU layers of width `hidden`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden, int hidden_layers,
      Eigen::Index out, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x) const;

 private:
  std::vector<Linear> layers_;
};

struct EncoderConfig {
  Eigen::Index d_model = 128;
  int layers = 3;
  int heads = 2;
  Eigen::Index d_hidden = 128;
  void validate() const;
};

// Pre-norm transformer encoder: x + MHA(LN(x)), then x + FFN(LN(x)), and a
// final LayerNorm. Full bidirectional self-attention.
class AttentionEncoder {
 public:
  AttentionEncoder() = default;
  AttentionEncoder(ParameterSet& ps, const std::string& name, const EncoderConfig& cfg, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln1, ln2;
    Linear q, k, v, o;
    Linear ff1, ff2;
  };
  Tensor attention(Tape& tape, const Block& b, const Tensor& x) const;

  EncoderConfig cfg_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

// Sinusoidal encoding at p = (t - t_1) / (t_n - t_1) * scale; p = 0 for a
// single time or a zero-length span. Row i: sin(p w_k), cos(p w_k) pairs with
// w_k = 10000^(-2k / d_model).
Mat sinusoidal_positions(std::span<const double> times, Eigen::Index d_model, double scale = 100.0);

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions opts);
  // Applies one update from the current gradients. Throws NumericError on a
  // non-finite gradient before touching any parameter.
  void step();
  long steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  ParameterSet& params_;
  AdamOptions opts_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

// Checkpoint: `<stem>.bin` holds every value as float64 little-endian in
// registration order; `<stem>.json` lists {name, shape, offset} per tensor.
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& stem,
                     const nlohmann::json& extra = nlohmann::json::object());
// Loads into an existing set; names and shapes must match. Returns the
// manifest's "extra" object.
nlohmann::json load_checkpoint(ParameterSet& params, const std::filesystem::path& stem);

}  // namespace stpp::nn

#endif  // STPP_NN_HPP
