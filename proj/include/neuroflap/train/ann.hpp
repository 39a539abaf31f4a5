#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "neuroflap/snn/network.hpp"
#include "neuroflap/train/model.hpp"

namespace neuroflap::train {

/// Bias-free rectifier network with the same topology as the spiking one.
struct AnnLayerParams {
  snn::LayerKind kind = snn::LayerKind::feedforward;
  Eigen::MatrixXd w_in;
  Eigen::MatrixXd w_rec;  // 0 x 0 for feedforward layers
};

struct AnnParams {
  std::vector<AnnLayerParams> layers;
  Eigen::MatrixXd w_out;

  std::size_t input_size() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().w_in.cols()); }
  std::size_t output_size() const { return static_cast<std::size_t>(w_out.rows()); }
  AnnParams zeros_like() const;
  void set_zero();
  std::vector<ParamView> views(AnnParams& grads);
};

struct AnnInit {
  double input_gain = 1.0;
  double rec_gain = 0.5;
  double out_gain = 0.5;
};

AnnParams init_ann(std::size_t inputs, std::span<const std::size_t> hidden, std::span<const snn::LayerKind> kinds,
                   std::size_t outputs, const AnnInit& init, std::uint64_t seed);

struct AnnTape {
  Eigen::MatrixXd inputs;
  std::vector<Eigen::MatrixXd> hidden;  // per layer, N x (T+1), column 0 = zero state

  std::size_t steps() const { return static_cast<std::size_t>(inputs.cols()); }
  bool empty() const { return hidden.empty(); }
};

/// h[t] = relu(W_in p[t] + W_rec h[t-1]), y[t] = W_out h_last[t].
Sequence ann_forward(const AnnParams& params, const Eigen::MatrixXd& inputs, AnnTape* tape = nullptr);
void ann_backward(const AnnParams& params, const AnnTape& tape, const Sequence& grad_out, AnnParams& grads);

class AnnModel final : public Model {
 public:
  explicit AnnModel(AnnParams params);

  std::size_t input_size() const override { return params_.input_size(); }
  std::size_t output_size() const override { return params_.output_size(); }
  Sequence forward(const Eigen::MatrixXd& inputs) override;
  void backward(const Sequence& grad_out) override;
  std::vector<ParamView> parameters() override { return params_.views(grads_); }
  void zero_grad() override { grads_.set_zero(); }
  std::unique_ptr<Model> clone() const override;

  const AnnParams& params() const { return params_; }
  AnnParams& params() { return params_; }
  const AnnParams& grads() const { return grads_; }

 private:
  AnnParams params_;
  AnnParams grads_;
  AnnTape tape_;
};

/// One cascade stage of the ANN baseline with its signal scales.
struct AnnStage {
  AnnParams params;
  std::vector<double> input_scale;
  std::vector<double> output_scale;
};

struct AnnNetwork {
  AnnStage estimator;
  AnnStage controller;
  snn::ControllerVariant variant = snn::ControllerVariant::pitch_offset;
};

void save_ann(const AnnNetwork& net, std::ostream& out);
AnnNetwork load_ann(std::istream& in);
void save_ann_file(const AnnNetwork& net, const std::filesystem::path& path);
AnnNetwork load_ann_file(const std::filesystem::path& path);

/// 32-bit single-tick executor for latency comparison with the spiking runtime.
class AnnRuntime {
 public:
  explicit AnnRuntime(const AnnStage& stage);

  std::size_t input_size() const { return input_size_; }
  std::size_t output_size() const { return w_out_.rows; }
  void reset();
  /// Physical units in and out.
  void step(std::span<const float> in, std::span<float> out);
  /// Multiply-accumulates per tick.
  std::uint64_t macs_per_tick() const;

 private:
  struct Layer {
    snn::LayerKind kind;
    snn::Matrix w_in;
    snn::Matrix w_rec;
    std::vector<float> h;
    std::vector<float> next;
  };
  std::size_t input_size_ = 0;
  std::vector<Layer> layers_;
  snn::Matrix w_out_;
  std::vector<float> in_scale_;
  std::vector<float> out_scale_;
  std::vector<float> scaled_;
};

}  // namespace neuroflap::train
