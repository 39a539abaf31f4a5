#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "neuroflap/snn/network.hpp"
#include "neuroflap/train/adam.hpp"
#include "neuroflap/train/loss.hpp"

namespace neuroflap::train {

/// Sequence model trained by the harness. Inputs are D x T, outputs O x T,
/// both in the scaled signal space. Hidden state starts at zero every forward.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::size_t input_size() const = 0;
  virtual std::size_t output_size() const = 0;
  /// Runs the sequence and records whatever backward() needs.
  virtual Sequence forward(const Eigen::MatrixXd& inputs) = 0;
  /// Accumulates parameter gradients for the most recent forward().
  virtual void backward(const Sequence& grad_out) = 0;
  virtual std::vector<ParamView> parameters() = 0;
  virtual void zero_grad() = 0;
  /// Re-imposes parameter constraints after an optimizer step.
  virtual void project() {}
  virtual std::unique_ptr<Model> clone() const = 0;
};

// ---- spiking networks -------------------------------------------------------------

inline constexpr double kLeakMin = 1e-4;
inline constexpr double kLeakMax = 1.0 - 1e-4;

struct SnnLayerParams {
  snn::LayerKind kind = snn::LayerKind::feedforward;
  Eigen::MatrixXd w_in;
  Eigen::MatrixXd w_rec;  // 0 x 0 for feedforward layers
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  Eigen::VectorXd theta;
};

struct SnnParams {
  std::vector<SnnLayerParams> layers;
  Eigen::MatrixXd w_out;

  std::size_t input_size() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().w_in.cols()); }
  std::size_t output_size() const { return static_cast<std::size_t>(w_out.rows()); }
  /// Same shapes, all zeros.
  SnnParams zeros_like() const;
  void set_zero();
  std::vector<ParamView> views(SnnParams& grads);
};

struct SnnInit {
  double input_gain = 1.0;   // continuous input projection, std = gain / sqrt(fan_in)
  double spike_gain = 1.0;   // spike-driven input projection
  double rec_gain = 0.5;
  double out_gain = 0.5;
  double alpha_lo = 0.6, alpha_hi = 0.9;
  double beta_lo = 0.7, beta_hi = 0.95;
  double theta = 1.0;
};

SnnParams init_snn(std::size_t inputs, std::span<const std::size_t> hidden, std::span<const snn::LayerKind> kinds,
                   std::size_t outputs, const SnnInit& init, std::uint64_t seed);

SnnParams snn_params_from(const snn::SubNetwork& net);
/// Writes parameters (narrowed to 32-bit) into `net`; scales are left untouched.
void write_snn_params(const SnnParams& params, snn::SubNetwork& net);

/// Everything the backward pass needs from a forward pass. Columns index
/// timesteps 0..T (column 0 is the zero initial state).
struct SnnTape {
  Eigen::MatrixXd inputs;
  std::vector<Eigen::MatrixXd> current;
  std::vector<Eigen::MatrixXd> membrane;
  std::vector<Eigen::MatrixXd> spikes;

  std::size_t steps() const { return static_cast<std::size_t>(inputs.cols()); }
  bool empty() const { return current.empty(); }
};

/// Forward pass in 64-bit with the runtime's per-tick semantics; returns O x T outputs.
Sequence snn_forward(const SnnParams& params, const Eigen::MatrixXd& inputs, SnnTape* tape = nullptr);

/// Reverse-mode gradients through the recorded trajectory with the spike
/// derivative replaced by the arctan-style surrogate and the reset gate held
/// constant. Accumulates into `grads`.
void snn_backward(const SnnParams& params, const SnnTape& tape, const Sequence& grad_out, double kappa,
                  SnnParams& grads);

class SnnModel final : public Model {
 public:
  SnnModel(SnnParams params, double kappa);

  std::size_t input_size() const override { return params_.input_size(); }
  std::size_t output_size() const override { return params_.output_size(); }
  Sequence forward(const Eigen::MatrixXd& inputs) override;
  void backward(const Sequence& grad_out) override;
  std::vector<ParamView> parameters() override { return params_.views(grads_); }
  void zero_grad() override { grads_.set_zero(); }
  void project() override;
  std::unique_ptr<Model> clone() const override;

  const SnnParams& params() const { return params_; }
  SnnParams& params() { return params_; }
  const SnnParams& grads() const { return grads_; }
  const SnnTape& tape() const { return tape_; }
  double mean_spike_rate() const;

 private:
  SnnParams params_;
  SnnParams grads_;
  SnnTape tape_;
  double kappa_;
};

}  // namespace neuroflap::train
