// Acceptance run: one PASS/FAIL line per criterion.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "neuroflap/bench/bench.hpp"
#include "neuroflap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace neuroflap;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Outcome run_suite(const char* suite, double limit_s) {
  const auto t0 = Clock::now();
  doctest::Context ctx;
  ctx.setOption("test-suite", suite);
  ctx.setOption("minimal", true);
  const int rc = ctx.run();
  const double dt = seconds_since(t0);
  Outcome o;
  o.pass = rc == 0 && dt < limit_s;
  o.detail = std::string("suite '") + suite + "' " + (rc == 0 ? "passed" : "failed") + " in " + fmt("%.1f", dt) +
             " s (limit " + fmt("%.0f", limit_s) + " s)";
  return o;
}

const pipeline::ChannelMetrics& channel(const std::vector<pipeline::ChannelMetrics>& ms, const std::string& name) {
  for (const auto& m : ms) {
    if (m.name == name) return m;
  }
  throw std::runtime_error("missing metric " + name);
}

std::vector<expert::FlightLog> held_out(const std::vector<expert::FlightLog>& logs, double fraction) {
  std::vector<expert::FlightLog> out;
  for (auto i : train::split_logs(logs.size(), fraction).validation) out.push_back(logs[i]);
  return out;
}

// ---- criterion 6 settings --------------------------------------------------------

struct Scale {
  double minutes;
  std::size_t estimator_ff, estimator_rec, controller_rec;
  std::size_t estimator_epochs, controller_epochs;
  std::size_t batch;
  double learning_rate;
};

constexpr Scale kFull{20.0, 150, 150, 130, 30, 30, 1, 1e-3};
constexpr Scale kCi{5.0, 50, 50, 50, 20, 20, 1, 1e-3};
constexpr std::uint64_t kSeed = 1;

struct Trained {
  std::vector<expert::FlightLog> logs;
  pipeline::NetConfig net;
  pipeline::StageModel estimator;
  std::map<snn::ControllerVariant, pipeline::StageModel> controllers;
  double seconds = 0.0;

  snn::NetworkSpec spec(snn::ControllerVariant v) const {
    return pipeline::assemble_snn(estimator, controllers.at(v), v);
  }
};

void log_epoch(const char* tag, const train::EpochStats& s) {
  std::printf("    [%s] epoch %zu train %.5g val %.5g rho %.4f\n", tag, s.epoch, s.train_loss, s.val_loss, s.rho);
  std::fflush(stdout);
}

Trained train_all(const Scale& sc, const std::vector<snn::ControllerVariant>& variants, bool verbose) {
  const auto t0 = Clock::now();
  Trained t;
  pipeline::GenDataConfig g;
  g.minutes = sc.minutes;
  g.seed = kSeed;
  t.logs = pipeline::generate_logs(g);
  t.net.estimator_ff = sc.estimator_ff;
  t.net.estimator_rec = sc.estimator_rec;
  t.net.controller_rec = sc.controller_rec;
  train::TrainConfig cfg;
  cfg.batch_size = sc.batch;
  cfg.learning_rate = sc.learning_rate;
  cfg.seed = kSeed;
  cfg.epochs = sc.estimator_epochs;
  auto cb = [verbose](const char* tag) {
    return [verbose, tag](const train::EpochStats& s) {
      if (verbose) log_epoch(tag, s);
    };
  };
  t.estimator = pipeline::train_stage(t.logs, {train::Task::estimator, variants.front()}, pipeline::Backend::snn, t.net,
                                      cfg, cb("estimator"));
  cfg.epochs = sc.controller_epochs;
  for (auto v : variants) {
    t.net.variant = v;
    t.controllers[v] = pipeline::train_stage(t.logs, {train::Task::controller, v}, pipeline::Backend::snn, t.net, cfg,
                                             cb(std::string(snn::to_string(v)).c_str()));
  }
  t.seconds = seconds_since(t0);
  return t;
}

Outcome criterion6_ci() {
  const auto t0 = Clock::now();
  const auto t = train_all(kCi, {snn::ControllerVariant::pitch_offset}, false);
  const double dt = seconds_since(t0);
  const auto& he = t.estimator.result.history;
  const auto& hc = t.controllers.at(snn::ControllerVariant::pitch_offset).result.history;
  const double re = he.epochs.back().train_loss / he.initial_loss;
  const double rc = hc.epochs.back().train_loss / hc.initial_loss;
  Outcome o;
  o.pass = !he.diverged && !hc.diverged && re < 0.25 && rc < 0.25 && dt < 600.0;
  o.detail = "final/initial loss estimator " + fmt("%.3f", re) + ", controller " + fmt("%.3f", rc) + " in " +
             fmt("%.0f", dt) + " s";
  return o;
}

struct FullResult {
  Outcome outcome;
  std::optional<Trained> trained;
};

FullResult criterion6_full(bool verbose) {
  FullResult r;
  const std::vector<snn::ControllerVariant> variants{snn::ControllerVariant::pitch_offset,
                                                     snn::ControllerVariant::yaw_offset,
                                                     snn::ControllerVariant::cpg_agnostic};
  r.trained = train_all(kFull, variants, verbose);
  const auto& t = *r.trained;
  const auto test = held_out(t.logs, t.net.holdout_fraction);
  pipeline::EvalOptions opt;
  const auto pitch_rep = pipeline::evaluate(t.spec(snn::ControllerVariant::pitch_offset), test, opt);
  const auto yaw_rep = pipeline::evaluate(t.spec(snn::ControllerVariant::yaw_offset), test, opt);
  const auto& roll = channel(pitch_rep.estimator, "roll");
  const auto& pitch = channel(pitch_rep.estimator, "pitch");
  const auto& po = channel(pitch_rep.controller, "pitch_offset");
  const auto& yo = channel(yaw_rep.controller, "yaw_offset");
  std::size_t epochs = t.estimator.result.history.epochs.size();
  for (const auto& [v, c] : t.controllers) epochs = std::max(epochs, c.result.history.epochs.size());

  auto& o = r.outcome;
  o.pass = pitch.rmse <= 7.0 && roll.rmse <= 5.5 && po.rmse <= 5.0 && yo.rmse <= 1.5 && po.rho >= 0.9 &&
           yo.rho >= 0.9 && epochs <= 50 && t.seconds < 7200.0;
  o.detail = "held-out pitch " + fmt("%.2f", pitch.rmse) + " deg, roll " + fmt("%.2f", roll.rmse) +
             " deg, pitch offset " + fmt("%.2f", po.rmse) + " deg (rho " + fmt("%.3f", po.rho) + "), yaw offset " +
             fmt("%.2f", yo.rmse) + " deg (rho " + fmt("%.3f", yo.rho) + "), estimator rho pitch " +
             fmt("%.3f", pitch.rho) + " roll " + fmt("%.3f", roll.rho) + ", " + std::to_string(epochs) +
             " epochs, " + fmt("%.0f", t.seconds) + " s";
  return r;
}

Outcome criterion7(const Trained& t) {
  const double freqs[] = {2.0, 3.0, 3.25, 4.0};
  struct Row {
    double aware_offset, aware_pwm, agnostic_pwm;
  };
  std::map<double, Row> rows;
  const auto aware = t.spec(snn::ControllerVariant::pitch_offset);
  const auto agnostic = t.spec(snn::ControllerVariant::cpg_agnostic);
  for (double f : freqs) {
    pipeline::GenDataConfig g;
    g.minutes = 4.0;
    g.seed = 1000 + kSeed;
    g.flap_hz = f;
    const auto logs = pipeline::generate_logs(g);
    pipeline::EvalOptions opt;
    opt.cpg.frequency_hz = f;
    const auto a = pipeline::evaluate(aware, logs, opt);
    const auto n = pipeline::evaluate(agnostic, logs, opt);
    rows[f] = {channel(a.controller, "pitch_offset").rmse, a.pwm.rmse, n.pwm.rmse};
  }
  const auto& base = rows.at(3.25);
  Outcome o;
  o.pass = true;
  std::ostringstream d;
  d << "nominal offset " << fmt("%.2f", base.aware_offset) << " deg, pwm aware " << fmt("%.1f", base.aware_pwm)
    << " us, agnostic " << fmt("%.1f", base.agnostic_pwm) << " us;";
  for (double f : {2.0, 3.0, 4.0}) {
    const auto& r = rows.at(f);
    const double off = r.aware_offset / base.aware_offset - 1.0;
    const double pa = r.aware_pwm / base.aware_pwm - 1.0;
    const double pn = r.agnostic_pwm / base.agnostic_pwm - 1.0;
    o.pass = o.pass && off < 0.5 && pn > pa;
    d << " f=" << f << ": offset " << fmt("%+.0f%%", 100.0 * off) << ", pwm aware " << fmt("%+.0f%%", 100.0 * pa)
      << " vs agnostic " << fmt("%+.0f%%", 100.0 * pn) << ";";
  }
  o.detail = d.str();
  return o;
}

Outcome criterion8(const Trained& t) {
  const auto spec = t.spec(snn::ControllerVariant::pitch_offset);
  const auto test = held_out(t.logs, t.net.holdout_fraction);
  auto rows = pipeline::runtime_inputs(test.front(), spec.variant);
  const auto macs = bench::count_macs(spec, rows);
  const auto trace = bench::record_spikes(spec, rows);
  const double rate = bench::mean_spike_rate(spec, trace);
  const double ratio =
      static_cast<double>(macs.event_spike_mediated) / static_cast<double>(macs.dense_spike_mediated);
  rows.resize(std::min<std::size_t>(rows.size(), 3000));
  const auto lat = bench::bench_latency(spec, nullptr, rows, bench::sequence_id(rows));
  Outcome o;
  const bool mac_ok = rate > 0.5 || ratio <= 0.5;
  const bool lat_ok = rate >= 0.2 || lat.event_driven.median_ns < lat.dense.median_ns;
  o.pass = mac_ok && lat_ok && lat.outputs_rechecked;
  o.detail = "mean spike rate " + fmt("%.3f", rate) + ", spike-mediated MAC ratio " + fmt("%.3f", ratio) +
             ", median latency dense " + fmt("%.0f", lat.dense.median_ns / 1e3) + " us vs event-driven " +
             fmt("%.0f", lat.event_driven.median_ns / 1e3) + " us per sequence";
  if (rate >= 0.2) o.detail += " (latency clause not exercised: rate >= 0.2)";
  if (rate > 0.5) o.detail += " (MAC clause not exercised: rate > 0.5)";
  return o;
}

int sh(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(NEUROFLAP_CLI_PATH) + " " + args + " >> " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion10(const fs::path& work) {
  std::vector<std::string> reports, models;
  for (int run = 0; run < 2; ++run) {
    const auto dir = work / ("determinism_" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto log = dir / "log.txt";
    const std::string d = dir.string();
    const bool ok = sh("gen-data --out " + d + "/data --minutes 4 --seed 7", log) == 0 &&
                    sh("train --data " + d + "/data --out " + d +
                           "/model --estimator-ff 20 --estimator-rec 20 --controller-rec 20 --epochs 3 --batch 2"
                           " --seed 7 --quiet",
                       log) == 0 &&
                    sh("eval --model " + d + "/model/model.net --data " + d + "/data --out " + d + "/eval", log) == 0;
    if (!ok) return {false, "pipeline run " + std::to_string(run) + " failed, see " + log.string()};
    reports.push_back(slurp(dir / "eval" / "eval_report.txt") + slurp(dir / "model" / "train_summary.txt"));
    models.push_back(slurp(dir / "model" / "model.net"));
  }
  Outcome o;
  o.pass = !reports[0].empty() && reports[0] == reports[1] && models[0] == models[1];
  o.detail = std::string("metrics ") + (reports[0] == reports[1] ? "identical" : "differ") + ", checkpoints " +
             (models[0] == models[1] ? "identical" : "differ");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only;
  std::string work = (fs::temp_directory_path() / "neuroflap_acceptance").string();
  bool verbose = false;
  app.add_option("--only", only, "Comma-separated criteria to run (default: all)");
  app.add_option("--work-dir", work, "Scratch directory")->capture_default_str();
  app.add_flag("--verbose", verbose, "Print training progress");
  CLI11_PARSE(app, argc, argv);

  std::set<int> wanted;
  if (!only.empty()) {
    std::stringstream ss(only);
    for (std::string tok; std::getline(ss, tok, ',');) wanted.insert(std::stoi(tok));
  }
  const auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };
  fs::create_directories(work);

  int failures = 0;
  const auto report = [&](const std::string& id, const Outcome& o) {
    std::printf("criterion %s: %s - %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  const auto guarded = [&](const std::string& id, const std::function<Outcome()>& fn) {
    try {
      report(id, fn());
    } catch (const std::exception& e) {
      report(id, {false, std::string("exception: ") + e.what()});
    }
  };

  if (want(1)) guarded("1", [] { return run_suite("equations", 10.0); });
  if (want(2)) guarded("2", [] { return run_suite("equivalence", 60.0); });
  if (want(3)) guarded("3", [] { return run_suite("gradients", 120.0); });
  if (want(4)) guarded("4", [] { return run_suite("replay", 30.0); });
  if (want(5)) guarded("5", [] { return run_suite("madgwick", 30.0); });

  if (want(6)) guarded("6 (ci)", [] { return criterion6_ci(); });
  std::optional<Trained> trained;
  if (want(6) || want(7) || want(8)) {
    try {
      auto r = criterion6_full(verbose);
      trained = std::move(r.trained);
      if (want(6)) report("6", r.outcome);
    } catch (const std::exception& e) {
      report("6", {false, std::string("exception: ") + e.what()});
    }
  }
  if (want(7)) guarded("7", [&] { return trained ? criterion7(*trained) : Outcome{false, "no trained networks"}; });
  if (want(8)) guarded("8", [&] { return trained ? criterion8(*trained) : Outcome{false, "no trained networks"}; });
  if (want(10)) guarded("10", [&] { return criterion10(work); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
