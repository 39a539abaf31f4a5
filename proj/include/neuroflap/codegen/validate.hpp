#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuroflap/codegen/emit.hpp"
#include "neuroflap/snn/network.hpp"

namespace neuroflap::codegen {

using Rows = std::vector<std::vector<float>>;

/// Per-tick outputs ([state; control]) and per-layer spike counts of the reference runtime.
struct ReferenceTrace {
  Rows outputs;
  std::vector<std::vector<std::uint32_t>> spikes;
};

/// Runs a copy of `spec` from the zero state over rows of [imu; refs_meas].
ReferenceTrace reference_run(const snn::NetworkSpec& spec, const Rows& inputs);

/// How to build and run the compiled harness. The harness driver is a C
/// translation unit providing main(argc, argv) that reads the input CSV and
/// writes the output CSV through the artifact's entry points.
struct HarnessConfig {
  std::string c_compiler;
  std::filesystem::path driver_source;  // empty: harness unavailable
  std::vector<std::string> cflags{"-std=c99", "-O2", "-ffp-contract=off", "-fno-fast-math"};
  std::filesystem::path work_dir;  // empty: a fresh temporary directory
};

/// Defaults from the build (C compiler) and the NEUROFLAP_HARNESS_DRIVER environment variable.
HarnessConfig default_harness_config();

enum class ValidationStatus { passed, failed, skipped };
std::string_view to_string(ValidationStatus status);

struct ValidationReport {
  ValidationStatus status = ValidationStatus::skipped;
  std::size_t steps = 0;
  double tolerance = 0.0;
  std::vector<double> max_abs_deviation;  // per output channel
  bool spikes_match = false;
  std::optional<std::size_t> first_spike_mismatch;
  std::string message;
};

/// Compares observed harness outputs with a reference trace.
ValidationReport compare_traces(const ReferenceTrace& reference, const ReferenceTrace& observed, double tolerance);

/// Compiles the artifact with the harness, drives it over `inputs`, and compares
/// with `reference`. Reports `skipped` (never `passed`) when no harness is available.
ValidationReport validate_export(const ExportArtifact& artifact, const Rows& inputs, const ReferenceTrace& reference,
                                 double tolerance, const HarnessConfig& harness = default_harness_config());

/// Harness CSV protocol: no header; input rows are comma-separated floats; output
/// rows are outputs followed by per-layer spike counts.
void write_harness_input(const std::filesystem::path& path, const Rows& inputs);
ReferenceTrace read_harness_output(const std::filesystem::path& path, std::size_t outputs, std::size_t layers);

void write_report(const ValidationReport& report, std::ostream& out);

}  // namespace neuroflap::codegen
