// neuroflap: data generation, training, evaluation, export, validation and benchmarking.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "neuroflap/bench/bench.hpp"
#include "neuroflap/codegen/emit.hpp"
#include "neuroflap/codegen/validate.hpp"
#include "neuroflap/error.hpp"
#include "neuroflap/pipeline.hpp"
#include "neuroflap/snn/serialize.hpp"
#include "neuroflap/train/ann.hpp"

namespace fs = std::filesystem;
using namespace neuroflap;

namespace {

// Validation exit codes beyond 0/1.
constexpr int kExitSkipped = 3;

struct GenDataArgs {
  pipeline::GenDataConfig cfg;
  fs::path out;
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  std::string backend = "snn";
  std::string variant = "pitch_offset";
  pipeline::NetConfig net;
  train::TrainConfig train;
  bool quiet = false;
};

struct EvalArgs {
  fs::path model;
  bool expert = false;
  fs::path data;
  fs::path out;
  bool all = false;
  bool open_loop = false;
  bool integrated_yaw = false;
  std::size_t skip = 100;
  std::size_t plots = 1;
  double holdout = 0.15;
};

struct ExportArgs {
  fs::path model;
  std::string mode = "event_driven";
  std::string prefix = "snn";
  fs::path out;
};

struct ValidateArgs {
  fs::path artifact;
  fs::path model;
  fs::path log;
  fs::path harness;
  fs::path out;
  std::size_t steps = 0;
  double tolerance = 1e-5;
};

struct BenchArgs {
  fs::path model;
  fs::path ann;
  fs::path log;
  fs::path out;
  std::size_t ticks = 0;
  std::size_t repetitions = 30;
  std::size_t warmup = 2;
  double variance_threshold = 0.25;
  bool plot = false;
};

std::string first_line(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  return line;
}

bool is_ann_file(const fs::path& path) { return first_line(path).rfind("neuroflap-ann", 0) == 0; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string report_text(const pipeline::EvalReport& report) {
  std::ostringstream os;
  pipeline::write_eval_report(report, os);
  return os.str();
}

bench::Rows truncate(bench::Rows rows, std::size_t n) {
  if (n > 0 && n < rows.size()) rows.resize(n);
  return rows;
}

// ---- subcommands ------------------------------------------------------------------

int run_gen_data(const GenDataArgs& a) {
  const auto logs = pipeline::generate_logs(a.cfg);
  pipeline::write_logs(logs, a.out);
  std::size_t ticks = 0;
  for (const auto& l : logs) ticks += l.size();
  std::printf("wrote %zu logs (%zu ticks) to %s\n", logs.size(), ticks, a.out.string().c_str());
  return 0;
}

int run_train(TrainArgs a) {
  const auto backend = pipeline::parse_backend(a.backend);
  a.net.variant = snn::parse_controller_variant(a.variant);
  a.train.validate();
  const auto logs = pipeline::read_logs(a.data);
  fs::create_directories(a.out);

  auto on_epoch = [&](train::Task task, const train::EpochStats& s) {
    if (a.quiet) return;
    std::fprintf(stderr, "[%s] epoch %zu train %.6g val %.6g rho %.4f\n", std::string(train::to_string(task)).c_str(),
                 s.epoch, s.train_loss, s.val_loss, s.rho);
  };
  const auto models = pipeline::train_models(logs, backend, a.net, a.train, on_epoch);

  const fs::path model_path = a.out / (backend == pipeline::Backend::snn ? "model.net" : "model.ann");
  if (backend == pipeline::Backend::snn) {
    snn::save_network_file(models.snn, model_path);
  } else {
    train::save_ann_file(models.ann, model_path);
  }
  train::write_history_csv_file(models.estimator.history, a.out / "estimator_history.csv");
  train::write_history_csv_file(models.controller.history, a.out / "controller_history.csv");
  train::save_optimizer_state_file(models.estimator.optimizer, a.out / "estimator.opt");
  train::save_optimizer_state_file(models.controller.optimizer, a.out / "controller.opt");

  std::ostringstream summary;
  for (const auto* stage : {&models.estimator, &models.controller}) {
    const char* name = stage == &models.estimator ? "estimator" : "controller";
    const auto& h = stage->history;
    summary << name << ".train_windows: " << stage->train_windows << '\n'
            << name << ".validation_windows: " << stage->validation_windows << '\n'
            << name << ".epochs: " << h.epochs.size() << '\n'
            << name << ".diverged: " << (h.diverged ? "true" : "false") << '\n';
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s.initial_loss: %.17g\n", name, h.initial_loss);
    summary << buf;
    if (!h.epochs.empty()) {
      std::snprintf(buf, sizeof(buf), "%s.final_loss: %.17g\n", name, h.epochs.back().train_loss);
      summary << buf;
    }
    for (const auto& w : stage->warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (h.diverged) std::fprintf(stderr, "warning: %s training diverged: %s\n", name, h.message.c_str());
  }
  write_text(a.out / "train_summary.txt", summary.str());
  std::printf("%s", summary.str().c_str());
  std::printf("model: %s\n", model_path.string().c_str());
  return 0;
}

int run_eval(const EvalArgs& a) {
  auto logs = pipeline::read_logs(a.data);
  if (!a.all) {
    const auto split = train::split_logs(logs.size(), a.holdout);
    std::vector<expert::FlightLog> held;
    for (auto i : split.validation) held.push_back(std::move(logs[i]));
    if (held.empty()) throw std::runtime_error("no held-out logs; pass --all to evaluate on every log");
    logs = std::move(held);
  }
  fs::create_directories(a.out);
  pipeline::EvalOptions opt;
  opt.cascade = !a.open_loop;
  opt.yaw = a.integrated_yaw ? pipeline::YawSource::integrated : pipeline::YawSource::log;
  opt.skip = a.skip;

  pipeline::EvalReport report;
  std::vector<pipeline::EvalTrace> traces;
  snn::ControllerVariant variant = snn::ControllerVariant::pitch_offset;
  if (a.expert) {
    report = pipeline::evaluate_expert(logs, expert::ExpertConfig{}, opt);
  } else if (is_ann_file(a.model)) {
    const auto net = train::load_ann_file(a.model);
    variant = net.variant;
    report = pipeline::evaluate(net, logs, opt, &traces);
  } else {
    const auto spec = snn::load_network_file(a.model);
    variant = spec.variant;
    report = pipeline::evaluate(spec, logs, opt, &traces);
  }
  const auto text = report_text(report);
  write_text(a.out / "eval_report.txt", text);
  std::printf("%s", text.c_str());
  for (std::size_t i = 0; i < traces.size() && i < a.plots; ++i) {
    const std::string stem = "log" + std::to_string(i);
    pipeline::write_trace_csv(traces[i], a.out / (stem + "_trace.csv"));
    pipeline::write_trace_plots(traces[i], variant, a.out, stem);
  }
  return 0;
}

int run_export(const ExportArgs& a) {
  const auto spec = snn::load_network_file(a.model);
  const auto artifact = codegen::emit(spec, snn::parse_exec_mode(a.mode), a.prefix);
  codegen::write_artifact(artifact, a.out);
  std::printf("wrote %s, %s and manifest.txt to %s\n", artifact.header_name().c_str(), artifact.kernel_name().c_str(),
              a.out.string().c_str());
  return 0;
}

int run_validate(const ValidateArgs& a) {
  const auto artifact = codegen::read_artifact(a.artifact);
  const auto spec = snn::load_network_file(a.model);
  codegen::verify_artifact(artifact, spec);
  const auto log = expert::read_flight_log_file(a.log);
  const auto inputs = truncate(pipeline::runtime_inputs(log, spec.variant), a.steps);
  const auto reference = codegen::reference_run(spec, inputs);
  auto harness = codegen::default_harness_config();
  if (!a.harness.empty()) harness.driver_source = a.harness;
  const auto report = codegen::validate_export(artifact, inputs, reference, a.tolerance, harness);
  std::ostringstream os;
  codegen::write_report(report, os);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(a.out / "validation_report.txt", os.str());
  }
  std::printf("%s", os.str().c_str());
  switch (report.status) {
    case codegen::ValidationStatus::passed: return 0;
    case codegen::ValidationStatus::failed: return 1;
    case codegen::ValidationStatus::skipped: return kExitSkipped;
  }
  return 1;
}

int run_bench(const BenchArgs& a) {
  auto spec = snn::load_network_file(a.model);
  std::optional<train::AnnNetwork> ann;
  if (!a.ann.empty()) ann = train::load_ann_file(a.ann);
  const auto log = expert::read_flight_log_file(a.log);
  const auto inputs = truncate(pipeline::runtime_inputs(log, spec.variant), a.ticks);
  bench::BenchOptions opt;
  opt.repetitions = a.repetitions;
  opt.warmup = a.warmup;
  opt.variance_threshold = a.variance_threshold;
  const auto report =
      bench::bench_latency(spec, ann ? &*ann : nullptr, inputs, a.log.filename().string() + ":" + bench::sequence_id(inputs), opt);
  fs::create_directories(a.out);
  bench::write_bench_csv_file(report, a.out / "bench.csv");
  std::ostringstream os;
  bench::write_bench_csv(report, os);
  std::printf("%s", os.str().c_str());
  if (!report.outputs_rechecked) std::fprintf(stderr, "warning: timed runs did not reproduce the plain run\n");
  for (const auto* s : {&report.dense, &report.event_driven}) {
    if (s->unstable) std::fprintf(stderr, "warning: timing variance above threshold (cv %.3f)\n", s->cv);
  }
  if (a.plot) {
    const auto trace = bench::record_spikes(spec, inputs);
    std::vector<double> t(trace.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = 0.01 * static_cast<double>(k);
    std::vector<std::size_t> widths;
    for (const auto* sub : {&spec.estimator, &spec.controller}) {
      for (const auto& l : sub->layers) widths.push_back(l.size());
    }
    std::vector<pipeline::PlotSeries> series;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      pipeline::PlotSeries s{"layer " + std::to_string(l), std::vector<double>(trace.size()), ""};
      for (std::size_t k = 0; k < trace.size(); ++k) {
        s.values[k] = static_cast<double>(trace[k][l]) / static_cast<double>(widths[l]);
      }
      series.push_back(std::move(s));
    }
    pipeline::write_svg_plot(a.out / "spike_rate.svg", "Fraction of neurons firing per tick", t, series, "fraction");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking flight-controller imitation toolkit"};
  app.require_subcommand(1);
  auto config = std::make_shared<CLI::ConfigBase>();
  config->valueSeparator(':');
  app.config_formatter(config);
  app.set_config("--config", "", "key: value file; use [subcommand] sections or subcommand.key names");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Synthesize demonstration logs labelled by the expert");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--minutes", gen.cfg.minutes, "Total flight time")->capture_default_str();
  gen_cmd->add_option("--log-seconds", gen.cfg.log_seconds, "Length of each log")->capture_default_str();
  gen_cmd->add_option("--seed", gen.cfg.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--flap-hz", gen.cfg.flap_hz, "Flapping frequency")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit estimator and controller on a log directory");
  train_cmd->add_option("--data", tr.data, "Log directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  train_cmd->add_option("--backend", tr.backend, "snn or ann")->capture_default_str();
  train_cmd->add_option("--variant", tr.variant, "pitch_offset, yaw_offset or cpg_agnostic")->capture_default_str();
  train_cmd->add_option("--estimator-ff", tr.net.estimator_ff, "Estimator feedforward width")->capture_default_str();
  train_cmd->add_option("--estimator-rec", tr.net.estimator_rec, "Estimator recurrent width")->capture_default_str();
  train_cmd->add_option("--controller-rec", tr.net.controller_rec, "Controller recurrent width")->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs, "Epochs per stage")->capture_default_str();
  train_cmd->add_option("--window", tr.train.window_len, "Window length in ticks")->capture_default_str();
  train_cmd->add_option("--stride", tr.train.stride, "Window stride in ticks")->capture_default_str();
  train_cmd->add_option("--burn-in", tr.train.burn_in, "Ticks excluded from the loss")->capture_default_str();
  train_cmd->add_option("--batch", tr.train.batch_size, "Windows per batch")->capture_default_str();
  train_cmd->add_option("--lr", tr.train.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--clip", tr.train.grad_clip, "Gradient norm clip (0 disables)")->capture_default_str();
  train_cmd->add_option("--corr-weight", tr.train.corr_weight, "Controller correlation weight")->capture_default_str();
  train_cmd->add_option("--slope", tr.train.surrogate_slope, "Surrogate slope")->capture_default_str();
  train_cmd->add_option("--seed", tr.train.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--holdout", tr.net.holdout_fraction, "Held-out fraction of logs")->capture_default_str();
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Replay a checkpoint (or the expert) on logs and score it");
  auto* model_opt = eval_cmd->add_option("--model", ev.model, "model.net or model.ann")->check(CLI::ExistingFile);
  auto* expert_opt = eval_cmd->add_flag("--expert", ev.expert, "Score the expert against the stored labels");
  model_opt->excludes(expert_opt);
  eval_cmd->add_option("--data", ev.data, "Log directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", ev.out, "Report directory")->required();
  eval_cmd->add_flag("--all", ev.all, "Use every log instead of the held-out split");
  eval_cmd->add_option("--holdout", ev.holdout, "Held-out fraction of logs")->capture_default_str();
  eval_cmd->add_flag("--open-loop", ev.open_loop, "Feed the controller the expert's state instead of the estimate");
  eval_cmd->add_flag("--integrated-yaw", ev.integrated_yaw, "Integrate the estimated yaw rate for the yaw input");
  eval_cmd->add_option("--skip", ev.skip, "Leading ticks excluded per log")->capture_default_str();
  eval_cmd->add_option("--plots", ev.plots, "Logs to plot")->capture_default_str();

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export", "Emit C sources for a spiking checkpoint");
  export_cmd->add_option("--model", ex.model, "model.net")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", ex.out, "Artifact directory")->required();
  export_cmd->add_option("--mode", ex.mode, "dense or event_driven")->capture_default_str();
  export_cmd->add_option("--prefix", ex.prefix, "C symbol prefix")->capture_default_str();

  ValidateArgs va;
  auto* validate_cmd = app.add_subcommand("validate", "Compile an artifact and compare it with the reference runtime");
  validate_cmd->add_option("--artifact", va.artifact, "Artifact directory")->required()->check(CLI::ExistingDirectory);
  validate_cmd->add_option("--model", va.model, "model.net the artifact was emitted from")
      ->required()
      ->check(CLI::ExistingFile);
  validate_cmd->add_option("--log", va.log, "Flight log CSV driving the comparison")->required()->check(CLI::ExistingFile);
  validate_cmd->add_option("--harness", va.harness, "C driver source (default: $NEUROFLAP_HARNESS_DRIVER)");
  validate_cmd->add_option("--steps", va.steps, "Ticks to compare (0: whole log)")->capture_default_str();
  validate_cmd->add_option("--tol", va.tolerance, "Absolute output tolerance")->capture_default_str();
  validate_cmd->add_option("--out", va.out, "Report directory");

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Count MACs and time dense, event-driven and ANN inference");
  bench_cmd->add_option("--model", be.model, "model.net")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--ann", be.ann, "model.ann to compare against")->check(CLI::ExistingFile);
  bench_cmd->add_option("--log", be.log, "Flight log CSV")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", be.out, "Report directory")->required();
  bench_cmd->add_option("--ticks", be.ticks, "Ticks per repetition (0: whole log)")->capture_default_str();
  bench_cmd->add_option("--repetitions", be.repetitions, "Timed repetitions")->capture_default_str();
  bench_cmd->add_option("--warmup", be.warmup, "Discarded leading repetitions")->capture_default_str();
  bench_cmd->add_option("--variance-threshold", be.variance_threshold, "Flag cv above this")->capture_default_str();
  bench_cmd->add_flag("--plot", be.plot, "Write a per-tick spike-rate plot");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) {
      if (ev.model.empty() && !ev.expert) throw CLI::RequiredError("--model or --expert");
      return run_eval(ev);
    }
    if (*export_cmd) return run_export(ex);
    if (*validate_cmd) return run_validate(va);
    if (*bench_cmd) return run_bench(be);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
