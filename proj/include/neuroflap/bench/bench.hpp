#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "neuroflap/snn/network.hpp"
#include "neuroflap/train/ann.hpp"

namespace neuroflap::bench {

using Rows = std::vector<std::vector<float>>;  // per tick: [imu; refs_meas]

/// Per-tick, per-layer spike counts (estimator layers first).
using SpikeTrace = std::vector<std::vector<std::uint32_t>>;

SpikeTrace record_spikes(const snn::NetworkSpec& spec, const Rows& inputs);

struct MacCounts {
  std::size_t ticks = 0;
  std::uint64_t input_projection = 0;      // continuous input matrices, identical in both modes
  std::uint64_t dense_spike_mediated = 0;  // spike-fed w_in, w_rec and w_out at full size
  std::uint64_t event_spike_mediated = 0;  // active presynaptic spikes x postsynaptic count
  std::uint64_t ann = 0;                   // 0 when no ANN is given

  std::uint64_t dense() const { return input_projection + dense_spike_mediated; }
  std::uint64_t event_driven() const { return input_projection + event_spike_mediated; }
};

/// Counts from a recorded spike trace.
MacCounts macs_from_trace(const snn::NetworkSpec& spec, const SpikeTrace& trace);
/// Runs the network to record the trace, then counts. `ann` adds the analytic ANN count.
MacCounts count_macs(const snn::NetworkSpec& spec, const Rows& inputs, const train::AnnNetwork* ann = nullptr);

/// Mean firing fraction per layer over the trace.
std::vector<double> spike_rates(const snn::NetworkSpec& spec, const SpikeTrace& trace);
double mean_spike_rate(const snn::NetworkSpec& spec, const SpikeTrace& trace);

/// ANN cascade with the same tick interface as the spiking runtime.
class AnnCascade {
 public:
  explicit AnnCascade(const train::AnnNetwork& net);
  void reset();
  void step(std::span<const float> imu, std::span<const float> refs, std::span<float> state, std::span<float> control);
  std::size_t imu_size() const { return estimator_.input_size(); }
  std::size_t refs_size() const { return controller_.input_size() - estimator_.output_size(); }
  std::size_t state_size() const { return estimator_.output_size(); }
  std::size_t control_size() const { return controller_.output_size(); }
  std::uint64_t macs_per_tick() const { return estimator_.macs_per_tick() + controller_.macs_per_tick(); }

 private:
  train::AnnRuntime estimator_;
  train::AnnRuntime controller_;
  std::vector<float> controller_in_;
};

struct LatencyStats {
  double median_ns = 0.0;
  double p95_ns = 0.0;
  double mean_ns = 0.0;
  double cv = 0.0;  // coefficient of variation of per-repetition medians
  bool unstable = false;
};

struct BenchOptions {
  std::size_t repetitions = 30;
  std::size_t warmup = 2;                  // leading repetitions discarded
  double variance_threshold = 0.25;        // cv above this flags the variant
};

LatencyStats bench_snn(const snn::NetworkSpec& spec, snn::ExecMode mode, const Rows& inputs,
                       const BenchOptions& options = {});
LatencyStats bench_ann(const train::AnnNetwork& net, const Rows& inputs, const BenchOptions& options = {});

struct BenchReport {
  std::string input_id;
  std::size_t ticks = 0;
  std::size_t repetitions = 0;
  MacCounts macs;
  std::vector<double> layer_spike_rate;
  double mean_spike_rate = 0.0;
  LatencyStats dense;
  LatencyStats event_driven;
  std::optional<LatencyStats> ann;
  bool outputs_rechecked = false;  // timed runs reproduced the plain run exactly
};

/// Times dense and event-driven execution (and the ANN when given) on the same
/// sequence, each repetition starting from the zero state.
BenchReport bench_latency(const snn::NetworkSpec& spec, const train::AnnNetwork* ann, const Rows& inputs,
                          const std::string& input_id, const BenchOptions& options = {});

/// One row per variant: variant,ticks,repetitions,median_ns,p95_ns,mean_ns,cv,unstable,macs_per_tick,mean_spike_rate,input
void write_bench_csv(const BenchReport& report, std::ostream& out);
void write_bench_csv_file(const BenchReport& report, const std::filesystem::path& path);

/// FNV-1a digest of an input sequence, used as its identity in reports.
std::string sequence_id(const Rows& inputs);

}  // namespace neuroflap::bench
