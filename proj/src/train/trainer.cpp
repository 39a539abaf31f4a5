#include "neuroflap/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "neuroflap/error.hpp"

namespace neuroflap::train {

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot take_snapshot(Model& model) {
  Snapshot s;
  for (const auto& p : model.parameters()) s.emplace_back(p.value.begin(), p.value.end());
  return s;
}

void apply_snapshot(Model& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(s[i].begin(), s[i].end(), params[i].value.begin());
}

}  // namespace

LossReport evaluate_loss(Model& model, const ScaledDataset& data, LossKind kind, const TrainConfig& cfg) {
  LossReport r;
  if (data.windows.empty()) {
    r.loss = std::numeric_limits<double>::quiet_NaN();
    r.rho = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  for (const auto& w : data.windows) {
    const Sequence pred = model.forward(w.input);
    r.loss += window_loss(kind, pred, w.target, data.windows.size(), cfg).value;
    r.rho += pearson({pred}, {w.target});
  }
  r.rho /= static_cast<double>(data.windows.size());
  return r;
}

TrainHistory train(Model& model, const ScaledDataset& train_set, const ScaledDataset* validation, LossKind kind,
                   const TrainConfig& cfg, Adam& optimizer, const EpochCallback& on_epoch, std::size_t first_epoch) {
  cfg.validate();
  require(!train_set.windows.empty(), "train: empty training set");
  for (const auto& w : train_set.windows) {
    require(static_cast<std::size_t>(w.input.rows()) == model.input_size() &&
                static_cast<std::size_t>(w.target.rows()) == model.output_size(),
            "train: window shape does not match the model");
  }

  TrainHistory history;
  history.initial_loss = evaluate_loss(model, train_set, kind, cfg).loss;
  if (!std::isfinite(history.initial_loss)) {
    history.diverged = true;
    history.message = "initial loss is not finite";
    return history;
  }

  std::vector<std::size_t> order(train_set.windows.size());
  std::mt19937_64 rng(cfg.seed);
  // Burn the shuffles of epochs already completed so a resumed run follows the same schedule.
  for (std::size_t e = 0; e < first_epoch; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  }

  for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    const Snapshot good = take_snapshot(model);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
        const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
        model.zero_grad();
        double batch_loss = 0.0;
        for (std::size_t i = b0; i < b1; ++i) {
          const auto& w = train_set.windows[order[i]];
          const Sequence pred = model.forward(w.input);
          const auto wl = window_loss(kind, pred, w.target, b1 - b0, cfg);
          batch_loss += wl.value;
          model.backward(wl.grad);
        }
        if (!std::isfinite(batch_loss)) throw TrainingError("non-finite batch loss");
        auto params = model.parameters();
        clip_gradients(params, cfg.grad_clip);
        optimizer.step(params);
        model.project();
        epoch_loss += batch_loss;
        ++batches;
      }
    } catch (const TrainingError& e) {
      apply_snapshot(model, good);
      history.diverged = true;
      history.message = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
      return history;
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = epoch_loss / static_cast<double>(batches);
    if (validation && !validation->windows.empty()) {
      const auto v = evaluate_loss(model, *validation, kind, cfg);
      stats.val_loss = v.loss;
      stats.rho = v.rho;
    } else {
      stats.val_loss = std::numeric_limits<double>::quiet_NaN();
      stats.rho = evaluate_loss(model, train_set, kind, cfg).rho;
    }
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

TrainHistory train(Model& model, const ScaledDataset& train_set, const ScaledDataset* validation, LossKind kind,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  Adam opt(Adam::Options{cfg.learning_rate, 0.9, 0.999, 1e-8});
  return train(model, train_set, validation, kind, cfg, opt, on_epoch);
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "epoch,train_loss,val_loss,rho\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "0,%.17g,,\n", history.initial_loss);
  out << buf;
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss, e.rho);
    out << buf;
  }
}

void write_history_csv_file(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_history_csv(history, out);
}

OptimizerCheckpoint snapshot(const Adam& optimizer, std::size_t epoch) {
  return {epoch, optimizer.steps(), optimizer.first_moments(), optimizer.second_moments()};
}

void restore(Adam& optimizer, const OptimizerCheckpoint& ckpt) { optimizer.restore(ckpt.steps, ckpt.m, ckpt.v); }

namespace {

void write_blocks(std::ostream& out, const char* key, const std::vector<std::vector<double>>& blocks) {
  out << key << ' ' << blocks.size() << '\n';
  char buf[48];
  for (const auto& b : blocks) {
    out << b.size();
    for (double v : b) {
      std::snprintf(buf, sizeof(buf), " %a", v);
      out << buf;
    }
    out << '\n';
  }
}

std::string next_word(std::istream& in) {
  std::string w;
  if (!(in >> w)) throw ContractViolation("optimizer state truncated");
  return w;
}

void expect_word(std::istream& in, const std::string& token) {
  const auto w = next_word(in);
  if (w != token) throw ContractViolation("optimizer state: expected '" + token + "', found '" + w + "'");
}

unsigned long long next_count(std::istream& in) {
  const auto w = next_word(in);
  char* end = nullptr;
  const auto v = std::strtoull(w.c_str(), &end, 10);
  if (end == w.c_str() || *end != '\0') throw ContractViolation("optimizer state: bad count '" + w + "'");
  return v;
}

std::vector<std::vector<double>> read_blocks(std::istream& in, const char* key) {
  expect_word(in, key);
  std::vector<std::vector<double>> blocks(next_count(in));
  for (auto& b : blocks) {
    b.resize(next_count(in));
    for (double& v : b) {
      const auto w = next_word(in);
      char* end = nullptr;
      v = std::strtod(w.c_str(), &end);
      if (end == w.c_str() || *end != '\0') throw ContractViolation("optimizer state: bad value '" + w + "'");
    }
  }
  return blocks;
}

}  // namespace

void save_optimizer_state(const OptimizerCheckpoint& ckpt, std::ostream& out) {
  out << "neuroflap-adam 1\n";
  out << "epoch " << ckpt.epoch << '\n';
  out << "steps " << ckpt.steps << '\n';
  write_blocks(out, "m", ckpt.m);
  write_blocks(out, "v", ckpt.v);
}

OptimizerCheckpoint load_optimizer_state(std::istream& in) {
  expect_word(in, "neuroflap-adam");
  expect_word(in, "1");
  OptimizerCheckpoint c;
  expect_word(in, "epoch");
  c.epoch = next_count(in);
  expect_word(in, "steps");
  c.steps = static_cast<long long>(next_count(in));
  c.m = read_blocks(in, "m");
  c.v = read_blocks(in, "v");
  require(c.m.size() == c.v.size(), "optimizer state: moment block counts differ");
  return c;
}

void save_optimizer_state_file(const OptimizerCheckpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_optimizer_state(ckpt, out);
}

OptimizerCheckpoint load_optimizer_state_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_optimizer_state(in);
}

}  // namespace neuroflap::train
