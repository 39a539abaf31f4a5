#include "neuroflap/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>

#include "neuroflap/error.hpp"
#include "neuroflap/snn/serialize.hpp"

namespace neuroflap::bench {

namespace {

std::pair<std::span<const float>, std::span<const float>> split_row(const std::vector<float>& row, std::size_t imu,
                                                                    std::size_t refs) {
  require(row.size() == imu + refs, "bench: input row has wrong width");
  return {std::span<const float>(row).first(imu), std::span<const float>(row).subspan(imu)};
}

std::vector<const snn::SubNetwork*> stages(const snn::NetworkSpec& spec) { return {&spec.estimator, &spec.controller}; }

}  // namespace

SpikeTrace record_spikes(const snn::NetworkSpec& spec, const Rows& inputs) {
  snn::NetworkSpec net = spec;
  net.prepare();
  snn::reset_state(net);
  std::vector<float> state(net.state_size());
  std::vector<float> control(net.control_size());
  SpikeTrace trace;
  trace.reserve(inputs.size());
  for (const auto& row : inputs) {
    const auto [imu, refs] = split_row(row, net.imu_size(), net.refs_size());
    snn::network_step_into(net, imu, refs, state, control);
    trace.push_back(snn::spike_counts(net));
  }
  return trace;
}

MacCounts macs_from_trace(const snn::NetworkSpec& spec, const SpikeTrace& trace) {
  MacCounts m;
  m.ticks = trace.size();
  const std::size_t n_layers = snn::layer_count(spec);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    require(trace[t].size() == n_layers, "macs_from_trace: trace width does not match the layer count");
    std::size_t g = 0;  // global layer index
    for (const auto* net : stages(spec)) {
      for (std::size_t l = 0; l < net->layers.size(); ++l, ++g) {
        const auto& layer = net->layers[l];
        const std::uint64_t rows = layer.size();
        if (l == 0) {
          m.input_projection += rows * layer.input_size();
        } else {
          m.dense_spike_mediated += rows * layer.input_size();
          m.event_spike_mediated += static_cast<std::uint64_t>(trace[t][g - 1]) * rows;
        }
        if (layer.kind == snn::LayerKind::recurrent) {
          m.dense_spike_mediated += rows * rows;
          if (t > 0) m.event_spike_mediated += static_cast<std::uint64_t>(trace[t - 1][g]) * rows;
        }
      }
      const std::uint64_t outs = net->output_size();
      m.dense_spike_mediated += outs * net->layers.back().size();
      m.event_spike_mediated += static_cast<std::uint64_t>(trace[t][g - 1]) * outs;
    }
  }
  return m;
}

MacCounts count_macs(const snn::NetworkSpec& spec, const Rows& inputs, const train::AnnNetwork* ann) {
  auto m = macs_from_trace(spec, record_spikes(spec, inputs));
  if (ann) m.ann = AnnCascade(*ann).macs_per_tick() * inputs.size();
  return m;
}

std::vector<double> spike_rates(const snn::NetworkSpec& spec, const SpikeTrace& trace) {
  std::vector<std::size_t> sizes;
  for (const auto* net : stages(spec)) {
    for (const auto& layer : net->layers) sizes.push_back(layer.size());
  }
  std::vector<double> rates(sizes.size(), 0.0);
  if (trace.empty()) return rates;
  for (const auto& tick : trace) {
    for (std::size_t l = 0; l < sizes.size(); ++l) rates[l] += tick[l];
  }
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    rates[l] /= static_cast<double>(trace.size()) * static_cast<double>(sizes[l]);
  }
  return rates;
}

double mean_spike_rate(const snn::NetworkSpec& spec, const SpikeTrace& trace) {
  double spikes = 0.0;
  double slots = 0.0;
  std::vector<std::size_t> sizes;
  for (const auto* net : stages(spec)) {
    for (const auto& layer : net->layers) sizes.push_back(layer.size());
  }
  for (const auto& tick : trace) {
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      spikes += tick[l];
      slots += static_cast<double>(sizes[l]);
    }
  }
  return slots > 0.0 ? spikes / slots : 0.0;
}

AnnCascade::AnnCascade(const train::AnnNetwork& net)
    : estimator_(net.estimator), controller_(net.controller), controller_in_(controller_.input_size(), 0.0f) {
  require(controller_.input_size() >= estimator_.output_size(), "AnnCascade: controller narrower than the state");
}

void AnnCascade::reset() {
  estimator_.reset();
  controller_.reset();
}

void AnnCascade::step(std::span<const float> imu, std::span<const float> refs, std::span<float> state,
                      std::span<float> control) {
  require(refs.size() == refs_size(), "AnnCascade: reference length mismatch");
  estimator_.step(imu, state);
  std::copy(refs.begin(), refs.end(), controller_in_.begin());
  std::copy(state.begin(), state.end(), controller_in_.begin() + static_cast<long>(refs.size()));
  controller_.step(controller_in_, control);
}

namespace {

using Clock = std::chrono::steady_clock;

struct Timed {
  std::vector<double> samples;        // per tick, all kept repetitions
  std::vector<double> rep_medians;
  std::vector<float> final_outputs;   // outputs of the last repetition, flattened
};

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - (q > 0.0 ? 1 : 0);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
  return v[k];
}

LatencyStats summarize(const Timed& t, const BenchOptions& options) {
  LatencyStats s;
  s.median_ns = percentile(t.samples, 0.5);
  s.p95_ns = percentile(t.samples, 0.95);
  double sum = 0.0;
  for (double x : t.samples) sum += x;
  s.mean_ns = t.samples.empty() ? 0.0 : sum / static_cast<double>(t.samples.size());
  double m = 0.0;
  for (double x : t.rep_medians) m += x;
  m /= static_cast<double>(std::max<std::size_t>(1, t.rep_medians.size()));
  double var = 0.0;
  for (double x : t.rep_medians) var += (x - m) * (x - m);
  var /= static_cast<double>(std::max<std::size_t>(1, t.rep_medians.size()));
  s.cv = m > 0.0 ? std::sqrt(var) / m : 0.0;
  s.unstable = s.cv > options.variance_threshold;
  return s;
}

template <typename Reset, typename Step>
Timed time_runs(const Rows& inputs, const BenchOptions& options, std::size_t out_width, Reset reset, Step step) {
  require(options.repetitions >= 30, "bench_latency: at least 30 repetitions are required");
  Timed t;
  t.samples.reserve(inputs.size() * options.repetitions);
  std::vector<float> out(out_width);
  std::vector<double> rep;
  for (std::size_t r = 0; r < options.warmup + options.repetitions; ++r) {
    reset();
    rep.clear();
    const bool last = r + 1 == options.warmup + options.repetitions;
    if (last) t.final_outputs.clear();
    for (const auto& row : inputs) {
      const auto t0 = Clock::now();
      step(row, out);
      const auto t1 = Clock::now();
      rep.push_back(static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
      if (last) t.final_outputs.insert(t.final_outputs.end(), out.begin(), out.end());
    }
    if (r >= options.warmup) {
      t.samples.insert(t.samples.end(), rep.begin(), rep.end());
      t.rep_medians.push_back(percentile(rep, 0.5));
    }
  }
  return t;
}

Timed time_snn(const snn::NetworkSpec& spec, snn::ExecMode mode, const Rows& inputs, const BenchOptions& options) {
  snn::NetworkSpec net = spec;
  net.mode = mode;
  net.prepare();
  const std::size_t imu = net.imu_size();
  const std::size_t refs = net.refs_size();
  const std::size_t ns = net.state_size();
  return time_runs(
      inputs, options, ns + net.control_size(), [&] { snn::reset_state(net); },
      [&](const std::vector<float>& row, std::vector<float>& out) {
        const auto [x, r] = split_row(row, imu, refs);
        snn::network_step_into(net, x, r, std::span<float>(out).first(ns), std::span<float>(out).subspan(ns));
      });
}

Timed time_ann(const train::AnnNetwork& ann, const Rows& inputs, const BenchOptions& options) {
  AnnCascade net(ann);
  const std::size_t ns = net.state_size();
  return time_runs(
      inputs, options, ns + net.control_size(), [&] { net.reset(); },
      [&](const std::vector<float>& row, std::vector<float>& out) {
        const auto [x, r] = split_row(row, net.imu_size(), net.refs_size());
        net.step(x, r, std::span<float>(out).first(ns), std::span<float>(out).subspan(ns));
      });
}

std::vector<float> plain_run(const snn::NetworkSpec& spec, const Rows& inputs) {
  snn::NetworkSpec net = spec;
  net.prepare();
  snn::reset_state(net);
  std::vector<float> all;
  std::vector<float> state(net.state_size());
  std::vector<float> control(net.control_size());
  for (const auto& row : inputs) {
    const auto [x, r] = split_row(row, net.imu_size(), net.refs_size());
    snn::network_step_into(net, x, r, state, control);
    all.insert(all.end(), state.begin(), state.end());
    all.insert(all.end(), control.begin(), control.end());
  }
  return all;
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

}  // namespace

LatencyStats bench_snn(const snn::NetworkSpec& spec, snn::ExecMode mode, const Rows& inputs,
                       const BenchOptions& options) {
  return summarize(time_snn(spec, mode, inputs, options), options);
}

LatencyStats bench_ann(const train::AnnNetwork& net, const Rows& inputs, const BenchOptions& options) {
  return summarize(time_ann(net, inputs, options), options);
}

BenchReport bench_latency(const snn::NetworkSpec& spec, const train::AnnNetwork* ann, const Rows& inputs,
                          const std::string& input_id, const BenchOptions& options) {
  BenchReport report;
  report.input_id = input_id;
  report.ticks = inputs.size();
  report.repetitions = options.repetitions;
  const auto trace = record_spikes(spec, inputs);
  report.macs = macs_from_trace(spec, trace);
  report.layer_spike_rate = spike_rates(spec, trace);
  report.mean_spike_rate = mean_spike_rate(spec, trace);

  const auto dense = time_snn(spec, snn::ExecMode::dense, inputs, options);
  const auto event = time_snn(spec, snn::ExecMode::event_driven, inputs, options);
  report.dense = summarize(dense, options);
  report.event_driven = summarize(event, options);
  if (ann) {
    report.macs.ann = AnnCascade(*ann).macs_per_tick() * inputs.size();
    report.ann = summarize(time_ann(*ann, inputs, options), options);
  }
  snn::NetworkSpec reference = spec;
  reference.mode = snn::ExecMode::dense;
  const auto plain = plain_run(reference, inputs);
  report.outputs_rechecked = bit_equal(plain, dense.final_outputs) && bit_equal(plain, event.final_outputs);
  return report;
}

void write_bench_csv(const BenchReport& report, std::ostream& out) {
  out << "variant,ticks,repetitions,median_ns,p95_ns,mean_ns,cv,unstable,macs_per_tick,mean_spike_rate,input\n";
  const double ticks = static_cast<double>(std::max<std::size_t>(1, report.ticks));
  auto row = [&](const char* name, const LatencyStats& s, double macs, double rate) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.1f,%.1f,%.1f,%.4f,%d,%.2f,%.6f,%s\n", name, report.ticks,
                  report.repetitions, s.median_ns, s.p95_ns, s.mean_ns, s.cv, s.unstable ? 1 : 0, macs, rate,
                  report.input_id.c_str());
    out << buf;
  };
  if (report.ann) row("ann", *report.ann, static_cast<double>(report.macs.ann) / ticks, 0.0);
  row("snn_dense", report.dense, static_cast<double>(report.macs.dense()) / ticks, report.mean_spike_rate);
  row("snn_event_driven", report.event_driven, static_cast<double>(report.macs.event_driven()) / ticks,
      report.mean_spike_rate);
}

void write_bench_csv_file(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_bench_csv(report, out);
}

std::string sequence_id(const Rows& inputs) {
  std::string bytes;
  for (const auto& row : inputs) {
    bytes.append(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    bytes.push_back('\n');
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(snn::fnv1a64(bytes)));
  return buf;
}

}  // namespace neuroflap::bench
