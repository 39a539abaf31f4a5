#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace neuroflap::train {

struct TrainConfig {
  std::size_t window_len = 2500;
  std::size_t stride = 400;
  std::size_t burn_in = 100;
  double huber_delta = 1.0;
  double corr_weight = 0.5;
  double surrogate_slope = 2.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  unsigned long long seed = 1;

  void validate() const;
};

/// One window of a sequence batch: rows are output channels, columns are timesteps.
using Sequence = Eigen::MatrixXd;
/// T x B x O stored as B matrices of shape O x T.
using SequenceBatch = std::vector<Sequence>;

double huber(double error, double delta);
double huber_derivative(double error, double delta);

double surrogate_grad(double v, double theta, double kappa);

/// Pearson correlation over time for one channel. Zero-variance inputs give 0.
double pearson_channel(const Eigen::Ref<const Eigen::RowVectorXd>& pred,
                       const Eigen::Ref<const Eigen::RowVectorXd>& target);

/// Correlation over time per channel and batch element, averaged over both.
double pearson(const SequenceBatch& pred, const SequenceBatch& target);

double loss_estimator(const SequenceBatch& pred, const SequenceBatch& target, const TrainConfig& cfg);
double loss_controller(const SequenceBatch& pred, const SequenceBatch& target, const TrainConfig& cfg);

enum class LossKind { estimator, controller };

/// Contribution of one window of a batch of `batch_size` windows to the batch
/// loss, and the gradient of that contribution with respect to `pred`.
/// Summing `value` over the batch's windows gives the batch loss.
struct WindowLoss {
  double value = 0.0;
  double huber_mean = 0.0;
  double mean_corr = 0.0;
  Sequence grad;
};

WindowLoss window_loss(LossKind kind, const Sequence& pred, const Sequence& target, std::size_t batch_size,
                       const TrainConfig& cfg);

}  // namespace neuroflap::train
