#pragma once

#include <span>
#include <string>
#include <vector>

namespace neuroflap::train {

/// A named block of trainable values with its gradient accumulator.
struct ParamView {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

/// Adaptive-moment optimizer (first/second-moment estimates with bias correction).
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options options) : opt_(options) {}

  /// Applies one update. Throws TrainingError on a non-finite gradient.
  void step(std::span<ParamView> params);

  long long steps() const { return t_; }
  const Options& options() const { return opt_; }

  /// Flattened moment buffers, for checkpointing.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(long long steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  Options opt_{};
  long long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_gradients(std::span<ParamView> params, double max_norm);

}  // namespace neuroflap::train
