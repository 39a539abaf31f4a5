#include "neuroflap/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "neuroflap/error.hpp"

namespace neuroflap::pipeline {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<expert::FlightLog> generate_logs(const GenDataConfig& cfg) {
  require(cfg.minutes > 0.0 && cfg.log_seconds > 0.0, "generate_logs: durations must be positive");
  require(cfg.flap_hz > 0.0, "generate_logs: flap frequency must be positive");
  const double total = cfg.minutes * 60.0;
  const auto count = static_cast<std::size_t>(std::ceil(total / cfg.log_seconds - 1e-9));
  std::vector<expert::FlightLog> logs;
  logs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    expert::LogSpec spec = cfg.log;
    spec.synth.duration_s = std::min(cfg.log_seconds, total - static_cast<double>(i) * cfg.log_seconds);
    spec.synth.undulation_hz = cfg.flap_hz;
    spec.expert.cpg.frequency_hz = cfg.flap_hz;
    logs.push_back(expert::synthesize_log(spec, splitmix64(cfg.seed * 0x100000001b3ULL + i)));
  }
  return logs;
}

void write_logs(const std::vector<expert::FlightLog>& logs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < logs.size(); ++i) {
    std::snprintf(name, sizeof(name), "log_%03zu.csv", i);
    expert::write_flight_log_file(logs[i], dir / name);
  }
}

std::vector<expert::FlightLog> read_logs(const std::filesystem::path& dir) {
  std::vector<expert::FlightLog> logs;
  for (const auto& path : expert::list_flight_logs(dir)) logs.push_back(expert::read_flight_log_file(path));
  require(!logs.empty(), "no flight logs found in " + dir.string());
  return logs;
}

std::string_view to_string(Backend backend) { return backend == Backend::snn ? "snn" : "ann"; }

Backend parse_backend(std::string_view text) {
  if (text == "snn") return Backend::snn;
  if (text == "ann") return Backend::ann;
  throw ContractViolation("unknown backend '" + std::string(text) + "'");
}

// ---- training ---------------------------------------------------------------------

StageModel train_stage(const std::vector<expert::FlightLog>& logs, const train::TaskSpec& task, Backend backend,
                       const NetConfig& net, const train::TrainConfig& cfg,
                       const std::function<void(const train::EpochStats&)>& on_epoch) {
  require(!logs.empty(), "train_stage: no logs");
  const auto split = train::split_logs(logs.size(), net.holdout_fraction);
  std::vector<train::LogFeatures> train_f;
  std::vector<train::LogFeatures> val_f;
  for (auto i : split.train) train_f.push_back(train::extract_features(logs[i], task, net.bias_samples));
  for (auto i : split.validation) val_f.push_back(train::extract_features(logs[i], task, net.bias_samples));

  std::vector<Eigen::MatrixXd> xs;
  std::vector<Eigen::MatrixXd> ys;
  for (const auto& f : train_f) {
    xs.push_back(f.inputs);
    ys.push_back(f.targets);
  }
  StageModel out;
  out.c_x = train::compute_scales(xs);
  out.c_y = train::compute_scales(ys);

  const auto train_ds = train::window_dataset(train_f, out.c_x, out.c_y, cfg, train::Split::train, &out.result.warnings);
  const auto val_ds =
      train::window_dataset(val_f, out.c_x, out.c_y, cfg, train::Split::validation, &out.result.warnings);
  out.result.train_windows = train_ds.windows.size();
  out.result.validation_windows = val_ds.windows.size();
  require(!train_ds.windows.empty(), "train_stage: no training windows (logs shorter than the window?)");

  const bool estimator = task.task == train::Task::estimator;
  std::vector<std::size_t> hidden;
  std::vector<snn::LayerKind> kinds;
  if (estimator) {
    hidden = {net.estimator_ff, net.estimator_rec};
    kinds = {snn::LayerKind::feedforward, snn::LayerKind::recurrent};
  } else {
    hidden = {net.controller_rec};
    kinds = {snn::LayerKind::recurrent};
  }
  const std::uint64_t seed = splitmix64(cfg.seed ^ (estimator ? 0x51ULL : 0xc7ULL));
  const auto kind = estimator ? train::LossKind::estimator : train::LossKind::controller;
  const auto d = train::task_input_size(task);
  const auto o = train::task_output_size(task);

  train::Adam optimizer(train::Adam::Options{cfg.learning_rate, 0.9, 0.999, 1e-8});
  const auto* validation = val_ds.windows.empty() ? nullptr : &val_ds;
  if (backend == Backend::snn) {
    train::SnnModel model(train::init_snn(d, hidden, kinds, o, net.snn_init, seed), cfg.surrogate_slope);
    out.result.history = train::train(model, train_ds, validation, kind, cfg, optimizer, on_epoch);
    out.snn = model.params();
  } else {
    train::AnnModel model(train::init_ann(d, hidden, kinds, o, net.ann_init, seed));
    out.result.history = train::train(model, train_ds, validation, kind, cfg, optimizer, on_epoch);
    out.ann = model.params();
  }
  out.result.optimizer = train::snapshot(optimizer, out.result.history.epochs.size());
  return out;
}

namespace {

std::vector<float> to_floats(const std::vector<double>& v) { return {v.begin(), v.end()}; }

snn::SubNetwork make_stage(const StageModel& m) {
  snn::SubNetwork net;
  net.input_scale = to_floats(m.c_x);
  net.output_scale = to_floats(m.c_y);
  train::write_snn_params(m.snn, net);
  net.validate();
  return net;
}

}  // namespace

snn::NetworkSpec assemble_snn(const StageModel& estimator, const StageModel& controller,
                              snn::ControllerVariant variant) {
  snn::NetworkSpec spec;
  spec.estimator = make_stage(estimator);
  spec.controller = make_stage(controller);
  spec.variant = variant;
  spec.validate();
  spec.prepare();
  return spec;
}

train::AnnNetwork assemble_ann(const StageModel& estimator, const StageModel& controller,
                               snn::ControllerVariant variant) {
  train::AnnNetwork net;
  net.estimator = {estimator.ann, estimator.c_x, estimator.c_y};
  net.controller = {controller.ann, controller.c_x, controller.c_y};
  net.variant = variant;
  return net;
}

TrainedModels train_models(const std::vector<expert::FlightLog>& logs, Backend backend, const NetConfig& net,
                           const train::TrainConfig& cfg, const StageCallback& on_epoch) {
  auto callback = [&](train::Task task) {
    return [&, task](const train::EpochStats& s) {
      if (on_epoch) on_epoch(task, s);
    };
  };
  const auto est = train_stage(logs, {train::Task::estimator, net.variant}, backend, net, cfg,
                               callback(train::Task::estimator));
  const auto ctl = train_stage(logs, {train::Task::controller, net.variant}, backend, net, cfg,
                               callback(train::Task::controller));
  TrainedModels out;
  out.backend = backend;
  out.estimator = est.result;
  out.controller = ctl.result;
  if (backend == Backend::snn) {
    out.snn = assemble_snn(est, ctl, net.variant);
  } else {
    out.ann = assemble_ann(est, ctl, net.variant);
  }
  return out;
}

// ---- evaluation ---------------------------------------------------------------------

std::vector<std::vector<float>> runtime_inputs(const expert::FlightLog& log, snn::ControllerVariant variant,
                                               std::size_t bias_samples) {
  const auto bias = expert::log_gyro_bias(log, bias_samples);
  const std::size_t r = train::refs_size(variant);
  std::vector<std::vector<float>> rows(log.size(), std::vector<float>(6 + r));
  for (std::size_t k = 0; k < log.size(); ++k) {
    auto row = std::span<float>(rows[k]);
    train::imu_features(log[k], bias, row.first(6));
    train::refs_features(log[k], bias, variant, log[k].attitude.yaw, row.subspan(6));
  }
  return rows;
}

namespace {

/// Accumulates per-channel prediction/target streams across logs.
class Scorer {
 public:
  explicit Scorer(std::vector<std::string> names) : names_(std::move(names)), pred_(names_.size()), true_(names_.size()) {}

  void add(std::size_t c, double pred, double target) {
    pred_[c].push_back(pred);
    true_[c].push_back(target);
  }

  std::vector<ChannelMetrics> channels() const {
    std::vector<ChannelMetrics> out;
    for (std::size_t c = 0; c < names_.size(); ++c) out.push_back(score(names_[c], pred_[c], true_[c]));
    return out;
  }

  /// All channels pooled into one RMSE; correlation averaged over channels.
  ChannelMetrics pooled(const std::string& name) const {
    ChannelMetrics m{name, 0.0, 0.0};
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < names_.size(); ++c) {
      for (std::size_t i = 0; i < pred_[c].size(); ++i) {
        const double e = pred_[c][i] - true_[c][i];
        sq += e * e;
      }
      n += pred_[c].size();
      m.rho += score(names_[c], pred_[c], true_[c]).rho;
    }
    m.rmse = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    m.rho /= static_cast<double>(std::max<std::size_t>(1, names_.size()));
    return m;
  }

 private:
  static ChannelMetrics score(const std::string& name, const std::vector<double>& p, const std::vector<double>& t) {
    ChannelMetrics m{name, 0.0, 0.0};
    if (p.empty()) return m;
    double sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sq += (p[i] - t[i]) * (p[i] - t[i]);
    m.rmse = std::sqrt(sq / static_cast<double>(p.size()));
    if (p.size() >= 2) {
      const Eigen::Map<const Eigen::RowVectorXd> pm(p.data(), static_cast<Eigen::Index>(p.size()));
      const Eigen::Map<const Eigen::RowVectorXd> tm(t.data(), static_cast<Eigen::Index>(t.size()));
      m.rho = train::pearson_channel(pm, tm);
    }
    return m;
  }

  std::vector<std::string> names_;
  std::vector<std::vector<double>> pred_;
  std::vector<std::vector<double>> true_;
};

std::vector<std::string> control_names(snn::ControllerVariant v) {
  switch (v) {
    case snn::ControllerVariant::pitch_offset: return {"pitch_offset"};
    case snn::ControllerVariant::yaw_offset: return {"yaw_offset"};
    case snn::ControllerVariant::cpg_agnostic: return {"pwm_L", "pwm_R"};
  }
  return {};
}

/// Pulse widths implied by a controller output at tick k.
std::array<double, 2> implied_pwm(snn::ControllerVariant v, std::span<const float> control,
                                  const expert::FlightRecord& rec, std::size_t k, const EvalOptions& opt) {
  if (v == snn::ControllerVariant::cpg_agnostic) return {control[0], control[1]};
  const double o_pitch = v == snn::ControllerVariant::pitch_offset ? control[0] : rec.pitch_offset;
  const double o_yaw = v == snn::ControllerVariant::yaw_offset ? control[0] : rec.yaw_offset;
  const auto wings = expert::offsets_to_wing_commands(o_pitch, o_yaw);
  const double t = static_cast<double>(k) * opt.dt;
  return {expert::angle_to_pwm(expert::cpg_step(opt.cpg, t, wings.left), opt.servo),
          expert::angle_to_pwm(expert::cpg_step(opt.cpg, t, wings.right), opt.servo)};
}

struct Stepper {
  std::function<void()> reset;
  std::function<void(std::span<const float>, std::span<float>)> estimator;
  std::function<void(std::span<const float>, std::span<float>)> controller;
  std::function<void()> after_tick;
};

EvalReport run_eval(Stepper& stepper, snn::ControllerVariant variant, std::size_t control_size,
                    const std::vector<expert::FlightLog>& logs, const EvalOptions& opt,
                    std::vector<EvalTrace>* traces) {
  const std::size_t r = train::refs_size(variant);
  Scorer est({"roll", "pitch", "yaw_rate"});
  Scorer ctl(control_names(variant));
  Scorer pwm({"pwm_L", "pwm_R"});
  std::vector<float> x(6), state(3), ctl_in(r + 3), control(control_size);
  std::vector<double> expert_state(3), target(control_size);
  EvalReport report;
  report.logs = logs.size();
  for (const auto& log : logs) {
    stepper.reset();
    const auto bias = expert::log_gyro_bias(log, opt.bias_samples);
    expert::YawIntegrator yaw(log.empty() ? 0.0 : log.front().attitude.yaw);
    EvalTrace trace;
    if (traces) {
      const auto n = static_cast<Eigen::Index>(log.size());
      trace.state_pred.resize(3, n);
      trace.state_true.resize(3, n);
      trace.control_pred.resize(static_cast<Eigen::Index>(control_size), n);
      trace.control_true.resize(static_cast<Eigen::Index>(control_size), n);
      trace.pwm_pred.resize(2, n);
      trace.pwm_true.resize(2, n);
    }
    for (std::size_t k = 0; k < log.size(); ++k) {
      const auto& rec = log[k];
      train::imu_features(rec, bias, x);
      stepper.estimator(x, state);
      const double yaw_deg = opt.yaw == YawSource::log ? rec.attitude.yaw : yaw.update(state[2], opt.dt);
      train::refs_features(rec, bias, variant, yaw_deg, std::span<float>(ctl_in).first(r));
      train::state_targets(rec, expert_state);
      for (std::size_t i = 0; i < 3; ++i) {
        ctl_in[r + i] = opt.cascade ? state[i] : static_cast<float>(expert_state[i]);
      }
      stepper.controller(ctl_in, control);
      if (stepper.after_tick) stepper.after_tick();
      train::control_targets(rec, variant, target);
      const auto p = implied_pwm(variant, control, rec, k, opt);

      if (traces) {
        const auto c = static_cast<Eigen::Index>(k);
        trace.time.push_back(static_cast<double>(k) * opt.dt);
        for (std::size_t i = 0; i < 3; ++i) {
          trace.state_pred(static_cast<Eigen::Index>(i), c) = state[i];
          trace.state_true(static_cast<Eigen::Index>(i), c) = expert_state[i];
        }
        for (std::size_t i = 0; i < control_size; ++i) {
          trace.control_pred(static_cast<Eigen::Index>(i), c) = control[i];
          trace.control_true(static_cast<Eigen::Index>(i), c) = target[i];
        }
        trace.pwm_pred(0, c) = p[0];
        trace.pwm_pred(1, c) = p[1];
        trace.pwm_true(0, c) = rec.pwm_left;
        trace.pwm_true(1, c) = rec.pwm_right;
      }
      if (k < opt.skip) continue;
      ++report.ticks;
      for (std::size_t i = 0; i < 3; ++i) est.add(i, state[i], expert_state[i]);
      for (std::size_t i = 0; i < control_size; ++i) ctl.add(i, control[i], target[i]);
      pwm.add(0, p[0], rec.pwm_left);
      pwm.add(1, p[1], rec.pwm_right);
    }
    if (traces) traces->push_back(std::move(trace));
  }
  report.estimator = est.channels();
  report.controller = ctl.channels();
  report.pwm = pwm.pooled("pwm");
  return report;
}

}  // namespace

EvalReport evaluate(const snn::NetworkSpec& spec, const std::vector<expert::FlightLog>& logs,
                    const EvalOptions& options, std::vector<EvalTrace>* traces) {
  snn::NetworkSpec net = spec;
  net.validate();
  net.prepare();
  std::vector<double> spikes(snn::layer_count(net), 0.0);
  std::vector<double> sizes;
  for (const auto* s : {&net.estimator, &net.controller}) {
    for (const auto& l : s->layers) sizes.push_back(static_cast<double>(l.size()));
  }
  double ticks = 0.0;
  Stepper stepper;
  stepper.reset = [&] { snn::reset_state(net); };
  stepper.estimator = [&](std::span<const float> in, std::span<float> out) {
    snn::subnetwork_step(net.estimator, in, out, net.mode);
  };
  stepper.controller = [&](std::span<const float> in, std::span<float> out) {
    snn::subnetwork_step(net.controller, in, out, net.mode);
  };
  stepper.after_tick = [&] {
    const auto c = snn::spike_counts(net);
    for (std::size_t i = 0; i < c.size(); ++i) spikes[i] += c[i];
    ticks += 1.0;
  };
  require(net.controller.input_size() == train::refs_size(net.variant) + 3,
          "evaluate: controller input width does not match its variant");
  auto report = run_eval(stepper, net.variant, net.control_size(), logs, options, traces);
  double total = 0.0, slots = 0.0;
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    report.layer_spike_rate.push_back(ticks > 0.0 ? spikes[i] / (ticks * sizes[i]) : 0.0);
    total += spikes[i];
    slots += ticks * sizes[i];
  }
  report.mean_spike_rate = slots > 0.0 ? total / slots : 0.0;
  return report;
}

EvalReport evaluate(const train::AnnNetwork& ann, const std::vector<expert::FlightLog>& logs,
                    const EvalOptions& options, std::vector<EvalTrace>* traces) {
  train::AnnRuntime est(ann.estimator);
  train::AnnRuntime ctl(ann.controller);
  require(ctl.input_size() == train::refs_size(ann.variant) + 3,
          "evaluate: controller input width does not match its variant");
  Stepper stepper;
  stepper.reset = [&] {
    est.reset();
    ctl.reset();
  };
  stepper.estimator = [&](std::span<const float> in, std::span<float> out) { est.step(in, out); };
  stepper.controller = [&](std::span<const float> in, std::span<float> out) { ctl.step(in, out); };
  return run_eval(stepper, ann.variant, ctl.output_size(), logs, options, traces);
}

EvalReport evaluate_expert(const std::vector<expert::FlightLog>& logs, const expert::ExpertConfig& config,
                           const EvalOptions& options) {
  Scorer est({"roll", "pitch", "yaw_rate"});
  Scorer ctl({"pitch_offset", "yaw_offset"});
  Scorer pwm({"pwm_L", "pwm_R"});
  EvalReport report;
  report.logs = logs.size();
  for (const auto& log : logs) {
    const auto replay = expert::replay_expert(log, config);
    for (std::size_t k = options.skip; k < log.size(); ++k) {
      ++report.ticks;
      const auto& a = replay[k];
      const auto& b = log[k];
      est.add(0, a.attitude.roll, b.attitude.roll);
      est.add(1, a.attitude.pitch, b.attitude.pitch);
      est.add(2, a.attitude.yaw_rate, b.attitude.yaw_rate);
      ctl.add(0, a.pitch_offset, b.pitch_offset);
      ctl.add(1, a.yaw_offset, b.yaw_offset);
      pwm.add(0, a.pwm_left, b.pwm_left);
      pwm.add(1, a.pwm_right, b.pwm_right);
    }
  }
  report.estimator = est.channels();
  report.controller = ctl.channels();
  report.pwm = pwm.pooled("pwm");
  return report;
}

void write_eval_report(const EvalReport& report, std::ostream& out) {
  char buf[256];
  out << "logs: " << report.logs << "\nticks: " << report.ticks << '\n';
  auto line = [&](const char* group, const ChannelMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%s.%s.rmse: %.17g\n%s.%s.rho: %.17g\n", group, m.name.c_str(), m.rmse, group,
                  m.name.c_str(), m.rho);
    out << buf;
  };
  for (const auto& m : report.estimator) line("estimator", m);
  for (const auto& m : report.controller) line("controller", m);
  line("command", report.pwm);
  if (!report.layer_spike_rate.empty()) {
    for (std::size_t i = 0; i < report.layer_spike_rate.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "spike_rate.layer%zu: %.17g\n", i, report.layer_spike_rate[i]);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "spike_rate.mean: %.17g\n", report.mean_spike_rate);
    out << buf;
  }
}

}  // namespace neuroflap::pipeline
