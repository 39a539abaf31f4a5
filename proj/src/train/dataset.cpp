#include "neuroflap/train/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "neuroflap/error.hpp"

namespace neuroflap::train {

std::string_view to_string(Task task) { return task == Task::estimator ? "estimator" : "controller"; }

Task parse_task(std::string_view text) {
  if (text == "estimator") return Task::estimator;
  if (text == "controller") return Task::controller;
  throw ContractViolation("unknown task '" + std::string(text) + "'");
}

std::size_t refs_size(snn::ControllerVariant variant) {
  switch (variant) {
    case snn::ControllerVariant::pitch_offset: return 4;
    case snn::ControllerVariant::yaw_offset: return 5;
    case snn::ControllerVariant::cpg_agnostic: return 6;
  }
  return 0;
}

std::size_t task_input_size(const TaskSpec& spec) {
  return spec.task == Task::estimator ? 6 : refs_size(spec.variant) + 3;
}

std::size_t task_output_size(const TaskSpec& spec) {
  return spec.task == Task::estimator ? 3 : snn::controller_outputs(spec.variant);
}

void imu_features(const expert::FlightRecord& rec, const expert::Vec3& gyro_bias, std::span<float> out) {
  require(out.size() == 6, "imu_features: need 6 slots");
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<float>(rec.imu.gyro[i] - gyro_bias[i]);
    out[3 + i] = static_cast<float>(rec.imu.accel[i]);
  }
}

void refs_features(const expert::FlightRecord& rec, const expert::Vec3& gyro_bias, snn::ControllerVariant variant,
                   double yaw_deg, std::span<float> out) {
  require(out.size() == refs_size(variant), "refs_features: wrong output width");
  std::size_t k = 0;
  switch (variant) {
    case snn::ControllerVariant::pitch_offset:
      out[k++] = static_cast<float>(rec.pitch_ref);
      break;
    case snn::ControllerVariant::yaw_offset:
      out[k++] = static_cast<float>(rec.yaw_ref);
      out[k++] = static_cast<float>(yaw_deg);
      break;
    case snn::ControllerVariant::cpg_agnostic:
      out[k++] = static_cast<float>(rec.pitch_ref);
      out[k++] = static_cast<float>(rec.yaw_ref);
      out[k++] = static_cast<float>(yaw_deg);
      break;
  }
  for (int i = 0; i < 3; ++i) out[k++] = static_cast<float>(rec.imu.gyro[i] - gyro_bias[i]);
}

void state_targets(const expert::FlightRecord& rec, std::span<double> out) {
  require(out.size() == 3, "state_targets: need 3 slots");
  out[0] = rec.attitude.roll;
  out[1] = rec.attitude.pitch;
  out[2] = rec.attitude.yaw_rate;
}

void control_targets(const expert::FlightRecord& rec, snn::ControllerVariant variant, std::span<double> out) {
  require(out.size() == snn::controller_outputs(variant), "control_targets: wrong output width");
  switch (variant) {
    case snn::ControllerVariant::pitch_offset: out[0] = rec.pitch_offset; break;
    case snn::ControllerVariant::yaw_offset: out[0] = rec.yaw_offset; break;
    case snn::ControllerVariant::cpg_agnostic:
      out[0] = rec.pwm_left;
      out[1] = rec.pwm_right;
      break;
  }
}

LogFeatures extract_features(const expert::FlightLog& log, const TaskSpec& spec, std::size_t bias_samples) {
  const auto bias = expert::log_gyro_bias(log, bias_samples);
  const auto n = static_cast<Eigen::Index>(log.size());
  LogFeatures f;
  f.inputs.resize(static_cast<Eigen::Index>(task_input_size(spec)), n);
  f.targets.resize(static_cast<Eigen::Index>(task_output_size(spec)), n);
  std::vector<float> in(task_input_size(spec));
  std::vector<double> out(task_output_size(spec));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& rec = log[static_cast<std::size_t>(k)];
    if (spec.task == Task::estimator) {
      imu_features(rec, bias, in);
      state_targets(rec, out);
    } else {
      const std::size_t r = refs_size(spec.variant);
      refs_features(rec, bias, spec.variant, rec.attitude.yaw, std::span<float>(in).first(r));
      in[r] = static_cast<float>(rec.attitude.roll);
      in[r + 1] = static_cast<float>(rec.attitude.pitch);
      in[r + 2] = static_cast<float>(rec.attitude.yaw_rate);
      control_targets(rec, spec.variant, out);
    }
    for (std::size_t i = 0; i < in.size(); ++i) f.inputs(static_cast<Eigen::Index>(i), k) = in[i];
    for (std::size_t i = 0; i < out.size(); ++i) f.targets(static_cast<Eigen::Index>(i), k) = out[i];
  }
  return f;
}

std::vector<double> compute_scales(std::span<const Eigen::MatrixXd> signals) {
  require(!signals.empty(), "compute_scales: no signals");
  const auto channels = signals.front().rows();
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(channels);
  double count = 0.0;
  for (const auto& s : signals) {
    require(s.rows() == channels, "compute_scales: channel count differs between logs");
    sq += s.rowwise().squaredNorm();
    count += static_cast<double>(s.cols());
  }
  std::vector<double> c(static_cast<std::size_t>(channels), 1.0);
  if (count == 0.0) return c;
  for (Eigen::Index i = 0; i < channels; ++i) {
    const double rms = std::sqrt(sq[i] / count);
    if (rms > 0.0 && std::isfinite(rms)) c[static_cast<std::size_t>(i)] = 1.0 / rms;
  }
  return c;
}

Eigen::VectorXd scale(const Eigen::VectorXd& x, std::span<const double> c) {
  require(static_cast<std::size_t>(x.size()) == c.size(), "scale: length mismatch");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    require(c[static_cast<std::size_t>(i)] != 0.0, "scale: zero scale entry");
    out[i] = x[i] * c[static_cast<std::size_t>(i)];
  }
  return out;
}

Eigen::VectorXd unscale(const Eigen::VectorXd& y, std::span<const double> c) {
  require(static_cast<std::size_t>(y.size()) == c.size(), "unscale: length mismatch");
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    require(c[static_cast<std::size_t>(i)] != 0.0, "unscale: zero scale entry");
    out[i] = y[i] / c[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len, std::size_t stride) {
  require(window_len > 0 && stride > 0, "window_starts: window and stride must be positive");
  std::vector<std::size_t> starts;
  if (length < window_len) return starts;
  for (std::size_t s = 0; s + window_len <= length; s += stride) starts.push_back(s);
  return starts;
}

ScaledDataset window_dataset(std::span<const LogFeatures> logs, std::span<const double> c_x,
                             std::span<const double> c_y, const TrainConfig& cfg, Split split,
                             std::vector<std::string>* warnings) {
  cfg.validate();
  ScaledDataset ds;
  ds.c_x.assign(c_x.begin(), c_x.end());
  ds.c_y.assign(c_y.begin(), c_y.end());
  ds.split = split;
  for (double c : c_x) require(c != 0.0, "window_dataset: zero input scale");
  for (double c : c_y) require(c != 0.0, "window_dataset: zero output scale");
  const Eigen::Map<const Eigen::VectorXd> cx(c_x.data(), static_cast<Eigen::Index>(c_x.size()));
  const Eigen::Map<const Eigen::VectorXd> cy(c_y.data(), static_cast<Eigen::Index>(c_y.size()));
  const auto T = static_cast<Eigen::Index>(cfg.window_len);
  for (std::size_t li = 0; li < logs.size(); ++li) {
    const auto& log = logs[li];
    require(static_cast<std::size_t>(log.inputs.rows()) == c_x.size() &&
                static_cast<std::size_t>(log.targets.rows()) == c_y.size(),
            "window_dataset: scale length mismatch");
    require(log.inputs.cols() == log.targets.cols(), "window_dataset: input/target length mismatch");
    const auto length = static_cast<std::size_t>(log.inputs.cols());
    if (length < cfg.window_len) {
      if (warnings) {
        warnings->push_back("log " + std::to_string(li) + " has " + std::to_string(length) +
                            " samples, shorter than the window of " + std::to_string(cfg.window_len) + "; skipped");
      }
      continue;
    }
    for (std::size_t s : window_starts(length, cfg.window_len, cfg.stride)) {
      Window w;
      w.input = cx.asDiagonal() * log.inputs.middleCols(static_cast<Eigen::Index>(s), T);
      w.target = cy.asDiagonal() * log.targets.middleCols(static_cast<Eigen::Index>(s), T);
      w.log = li;
      w.start = s;
      ds.windows.push_back(std::move(w));
    }
  }
  return ds;
}

LogSplit split_logs(std::size_t n_logs, double holdout_fraction) {
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "split_logs: fraction must be in [0, 1)");
  std::size_t held = static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(n_logs)));
  if (n_logs >= 2 && holdout_fraction > 0.0) held = std::max<std::size_t>(held, 1);
  if (held >= n_logs) held = n_logs > 0 ? n_logs - 1 : 0;
  LogSplit s;
  for (std::size_t i = 0; i < n_logs; ++i) (i < n_logs - held ? s.train : s.validation).push_back(i);
  return s;
}

}  // namespace neuroflap::train
