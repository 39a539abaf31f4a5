#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "neuroflap/expert/flight_log.hpp"
#include "neuroflap/snn/network.hpp"
#include "neuroflap/train/ann.hpp"
#include "neuroflap/train/dataset.hpp"
#include "neuroflap/train/model.hpp"
#include "neuroflap/train/trainer.hpp"

namespace neuroflap::pipeline {

// ---- data generation ------------------------------------------------------------

struct GenDataConfig {
  double minutes = 20.0;
  double log_seconds = 120.0;
  std::uint64_t seed = 1;
  double flap_hz = expert::kNominalFlapHz;  // CPG and body-undulation frequency
  expert::LogSpec log;
};

/// Deterministic per (config, seed). The last log is shortened to hit the total duration.
std::vector<expert::FlightLog> generate_logs(const GenDataConfig& cfg);

void write_logs(const std::vector<expert::FlightLog>& logs, const std::filesystem::path& dir);
std::vector<expert::FlightLog> read_logs(const std::filesystem::path& dir);

// ---- training ---------------------------------------------------------------------

enum class Backend { snn, ann };
std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view text);

struct NetConfig {
  std::size_t estimator_ff = 150;
  std::size_t estimator_rec = 150;
  std::size_t controller_rec = 130;
  snn::ControllerVariant variant = snn::ControllerVariant::pitch_offset;
  train::SnnInit snn_init;
  train::AnnInit ann_init;
  std::size_t bias_samples = 200;
  double holdout_fraction = 0.15;
};

struct StageResult {
  train::TrainHistory history;
  std::size_t train_windows = 0;
  std::size_t validation_windows = 0;
  std::vector<std::string> warnings;
  train::OptimizerCheckpoint optimizer;  // moments and epoch count at the end of training
};

struct TrainedModels {
  Backend backend = Backend::snn;
  snn::NetworkSpec snn;  // valid for Backend::snn
  train::AnnNetwork ann;  // valid for Backend::ann
  StageResult estimator;
  StageResult controller;
};

using StageCallback = std::function<void(train::Task, const train::EpochStats&)>;

/// Trains estimator and controller independently on the training logs
/// (teacher-forced controller inputs), validating on the held-out logs.
TrainedModels train_models(const std::vector<expert::FlightLog>& logs, Backend backend, const NetConfig& net,
                           const train::TrainConfig& cfg, const StageCallback& on_epoch = {});

/// Single stage, for callers that train the two stages with different settings.
struct StageModel {
  std::vector<double> c_x;
  std::vector<double> c_y;
  train::SnnParams snn;
  train::AnnParams ann;
  StageResult result;
};
StageModel train_stage(const std::vector<expert::FlightLog>& logs, const train::TaskSpec& task, Backend backend,
                       const NetConfig& net, const train::TrainConfig& cfg,
                       const std::function<void(const train::EpochStats&)>& on_epoch = {});

snn::NetworkSpec assemble_snn(const StageModel& estimator, const StageModel& controller,
                              snn::ControllerVariant variant);
train::AnnNetwork assemble_ann(const StageModel& estimator, const StageModel& controller,
                               snn::ControllerVariant variant);

// ---- evaluation ---------------------------------------------------------------------

enum class YawSource { log, integrated };

struct EvalOptions {
  bool cascade = true;  // controller sees the network's own state estimate
  YawSource yaw = YawSource::log;
  std::size_t skip = 100;  // leading ticks of each log excluded from metrics
  std::size_t bias_samples = 200;
  expert::CpgParams cpg;
  expert::ServoMap servo;
  double dt = 0.01;
};

struct ChannelMetrics {
  std::string name;
  double rmse = 0.0;
  double rho = 0.0;
};

struct EvalReport {
  std::size_t logs = 0;
  std::size_t ticks = 0;
  std::vector<ChannelMetrics> estimator;
  std::vector<ChannelMetrics> controller;
  /// Pulse-width error: offsets pushed through the oscillator and servo map for
  /// offset variants, the direct prediction for the CPG-agnostic variant.
  ChannelMetrics pwm;
  std::vector<double> layer_spike_rate;  // SNN only
  double mean_spike_rate = 0.0;
};

/// Per-tick predictions of one log, for plots.
struct EvalTrace {
  std::vector<double> time;
  Eigen::MatrixXd state_pred, state_true;      // 3 x N
  Eigen::MatrixXd control_pred, control_true;  // k x N
  Eigen::MatrixXd pwm_pred, pwm_true;          // 2 x N
};

EvalReport evaluate(const snn::NetworkSpec& spec, const std::vector<expert::FlightLog>& logs,
                    const EvalOptions& options, std::vector<EvalTrace>* traces = nullptr);
EvalReport evaluate(const train::AnnNetwork& net, const std::vector<expert::FlightLog>& logs,
                    const EvalOptions& options, std::vector<EvalTrace>* traces = nullptr);

/// Replays each log through the expert and scores the replay against the stored labels.
EvalReport evaluate_expert(const std::vector<expert::FlightLog>& logs, const expert::ExpertConfig& config,
                           const EvalOptions& options);

/// key: value lines with round-trip precision.
void write_eval_report(const EvalReport& report, std::ostream& out);

/// Rows of [imu; refs_meas] fed to the runtime for a log, with the log's yaw.
std::vector<std::vector<float>> runtime_inputs(const expert::FlightLog& log, snn::ControllerVariant variant,
                                               std::size_t bias_samples = 200);

// ---- plots ----------------------------------------------------------------------------

struct PlotSeries {
  std::string label;
  std::vector<double> values;
  std::string color;
};

/// Minimal SVG line chart.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::vector<double>& x,
                    const std::vector<PlotSeries>& series, const std::string& y_label = "");

/// Tracking and command overlays for one evaluated log.
void write_trace_plots(const EvalTrace& trace, snn::ControllerVariant variant, const std::filesystem::path& dir,
                       const std::string& stem);
void write_trace_csv(const EvalTrace& trace, const std::filesystem::path& path);

}  // namespace neuroflap::pipeline
