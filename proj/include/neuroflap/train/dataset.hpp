#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "neuroflap/expert/flight_log.hpp"
#include "neuroflap/snn/network.hpp"
#include "neuroflap/train/loss.hpp"

namespace neuroflap::train {

enum class Task { estimator, controller };

struct TaskSpec {
  Task task = Task::estimator;
  snn::ControllerVariant variant = snn::ControllerVariant::pitch_offset;
};

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

/// Estimator: 6 IMU channels (bias-corrected gyro rad/s, accel m/s^2) -> roll, pitch (deg), yaw rate (deg/s).
/// Controller: [refs_meas; roll, pitch, yaw rate] -> offsets (deg) or pulse widths (us).
std::size_t task_input_size(const TaskSpec& spec);
std::size_t task_output_size(const TaskSpec& spec);

/// Reference/measurement prefix of the controller input, by variant:
///   pitch_offset  [theta_ref, gyro xyz]
///   yaw_offset    [psi_ref, psi, gyro xyz]
///   cpg_agnostic  [theta_ref, psi_ref, psi, gyro xyz]
std::size_t refs_size(snn::ControllerVariant variant);
void refs_features(const expert::FlightRecord& rec, const expert::Vec3& gyro_bias, snn::ControllerVariant variant,
                   double yaw_deg, std::span<float> out);
void imu_features(const expert::FlightRecord& rec, const expert::Vec3& gyro_bias, std::span<float> out);
void state_targets(const expert::FlightRecord& rec, std::span<double> out);
void control_targets(const expert::FlightRecord& rec, snn::ControllerVariant variant, std::span<double> out);

/// Whole-log signals in physical units, channels x ticks.
struct LogFeatures {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

LogFeatures extract_features(const expert::FlightLog& log, const TaskSpec& spec, std::size_t bias_samples = 200);

/// Per-channel 1/RMS over all logs; channels with zero RMS get scale 1.
std::vector<double> compute_scales(std::span<const Eigen::MatrixXd> signals);

Eigen::VectorXd scale(const Eigen::VectorXd& x, std::span<const double> c);
Eigen::VectorXd unscale(const Eigen::VectorXd& y, std::span<const double> c);

enum class Split { train, validation, test };

struct Window {
  Eigen::MatrixXd input;   // D x T, scaled
  Eigen::MatrixXd target;  // O x T, scaled
  std::size_t log = 0;
  std::size_t start = 0;
};

struct ScaledDataset {
  std::vector<Window> windows;
  std::vector<double> c_x;
  std::vector<double> c_y;
  Split split = Split::train;
};

/// Start offsets of the windows cut from a log of `length` ticks.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len, std::size_t stride);

/// Overlapping windows per log in log order. Logs shorter than the window are
/// skipped and reported through `warnings`.
ScaledDataset window_dataset(std::span<const LogFeatures> logs, std::span<const double> c_x,
                             std::span<const double> c_y, const TrainConfig& cfg, Split split,
                             std::vector<std::string>* warnings = nullptr);

/// Indices of training and held-out logs: the last 15% (at least one when two
/// or more logs exist) are held out.
struct LogSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
LogSplit split_logs(std::size_t n_logs, double holdout_fraction = 0.15);

}  // namespace neuroflap::train
