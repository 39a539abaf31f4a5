#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "neuroflap/train/adam.hpp"
#include "neuroflap/train/dataset.hpp"
#include "neuroflap/train/loss.hpp"
#include "neuroflap/train/model.hpp"

namespace neuroflap::train {

/// Unrecoverable numerical failure during optimization (NaN/Inf gradient or loss).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation set
  double rho = 0.0;       // mean temporal correlation on validation (or training) windows
};

struct TrainHistory {
  double initial_loss = 0.0;  // training-set loss before the first update
  std::vector<EpochStats> epochs;
  bool diverged = false;
  std::string message;
};

struct LossReport {
  double loss = 0.0;
  double rho = 0.0;
};

/// Mean loss over all windows of a dataset (one window per batch slot).
LossReport evaluate_loss(Model& model, const ScaledDataset& data, LossKind kind, const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch BPTT. Each window starts from the zero state. Batches are formed
/// from a seeded shuffle; gradients are summed in batch order. On divergence the
/// model is rolled back to the parameters at the start of the failing epoch and
/// the history is returned with `diverged` set.
TrainHistory train(Model& model, const ScaledDataset& train_set, const ScaledDataset* validation, LossKind kind,
                   const TrainConfig& cfg, Adam& optimizer, const EpochCallback& on_epoch = {},
                   std::size_t first_epoch = 0);

TrainHistory train(Model& model, const ScaledDataset& train_set, const ScaledDataset* validation, LossKind kind,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// epoch,train_loss,val_loss,rho
void write_history_csv(const TrainHistory& history, std::ostream& out);
void write_history_csv_file(const TrainHistory& history, const std::filesystem::path& path);

/// Optimizer moments and epoch counter, stored next to the network file.
struct OptimizerCheckpoint {
  std::size_t epoch = 0;
  long long steps = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

OptimizerCheckpoint snapshot(const Adam& optimizer, std::size_t epoch);
void restore(Adam& optimizer, const OptimizerCheckpoint& ckpt);
void save_optimizer_state(const OptimizerCheckpoint& ckpt, std::ostream& out);
OptimizerCheckpoint load_optimizer_state(std::istream& in);
void save_optimizer_state_file(const OptimizerCheckpoint& ckpt, const std::filesystem::path& path);
OptimizerCheckpoint load_optimizer_state_file(const std::filesystem::path& path);

}  // namespace neuroflap::train
