#include "neuroflap/codegen/validate.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "neuroflap/error.hpp"

#ifndef NEUROFLAP_C_COMPILER
#define NEUROFLAP_C_COMPILER "cc"
#endif

namespace neuroflap::codegen {

ReferenceTrace reference_run(const snn::NetworkSpec& spec, const Rows& inputs) {
  snn::NetworkSpec net = spec;
  net.prepare();
  snn::reset_state(net);
  const std::size_t imu = net.imu_size();
  const std::size_t refs = net.refs_size();
  ReferenceTrace trace;
  trace.outputs.reserve(inputs.size());
  trace.spikes.reserve(inputs.size());
  std::vector<float> state(net.state_size());
  std::vector<float> control(net.control_size());
  for (const auto& row : inputs) {
    require(row.size() == imu + refs, "reference_run: input row has wrong width");
    snn::network_step_into(net, std::span<const float>(row).first(imu), std::span<const float>(row).subspan(imu),
                           state, control);
    std::vector<float> out(state);
    out.insert(out.end(), control.begin(), control.end());
    trace.outputs.push_back(std::move(out));
    trace.spikes.push_back(snn::spike_counts(net));
  }
  return trace;
}

HarnessConfig default_harness_config() {
  HarnessConfig cfg;
  cfg.c_compiler = NEUROFLAP_C_COMPILER;
  if (const char* driver = std::getenv("NEUROFLAP_HARNESS_DRIVER"); driver && *driver) cfg.driver_source = driver;
  return cfg;
}

std::string_view to_string(ValidationStatus status) {
  switch (status) {
    case ValidationStatus::passed: return "passed";
    case ValidationStatus::failed: return "failed";
    case ValidationStatus::skipped: return "skipped";
  }
  return "unknown";
}

ValidationReport compare_traces(const ReferenceTrace& reference, const ReferenceTrace& observed, double tolerance) {
  ValidationReport r;
  r.tolerance = tolerance;
  r.steps = reference.outputs.size();
  if (observed.outputs.size() != reference.outputs.size() || observed.spikes.size() != reference.spikes.size()) {
    r.status = ValidationStatus::failed;
    r.message = "row count mismatch: expected " + std::to_string(reference.outputs.size()) + ", got " +
                std::to_string(observed.outputs.size());
    return r;
  }
  const std::size_t channels = reference.outputs.empty() ? 0 : reference.outputs.front().size();
  r.max_abs_deviation.assign(channels, 0.0);
  r.spikes_match = true;
  for (std::size_t t = 0; t < r.steps; ++t) {
    const auto& a = reference.outputs[t];
    const auto& b = observed.outputs[t];
    if (a.size() != b.size()) {
      r.status = ValidationStatus::failed;
      r.message = "output width mismatch at row " + std::to_string(t);
      return r;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = std::abs(static_cast<double>(a[c]) - static_cast<double>(b[c]));
      // A NaN deviation must never pass.
      r.max_abs_deviation[c] = std::isnan(d) ? std::numeric_limits<double>::infinity()
                                             : std::max(r.max_abs_deviation[c], d);
    }
    if (r.spikes_match && reference.spikes[t] != observed.spikes[t]) {
      r.spikes_match = false;
      r.first_spike_mismatch = t;
    }
  }
  bool within = true;
  for (double d : r.max_abs_deviation) within = within && d <= tolerance;
  r.status = within && r.spikes_match ? ValidationStatus::passed : ValidationStatus::failed;
  if (!r.spikes_match) {
    r.message = "spike counts diverge at row " + std::to_string(*r.first_spike_mismatch);
  } else if (!within) {
    r.message = "output deviation exceeds tolerance";
  }
  return r;
}

void write_harness_input(const std::filesystem::path& path, const Rows& inputs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  for (const auto& row : inputs) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.9g", i ? "," : "", static_cast<double>(row[i]));
      out << buf;
    }
    out << '\n';
  }
}

ReferenceTrace read_harness_output(const std::filesystem::path& path, std::size_t outputs, std::size_t layers) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  ReferenceTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == outputs + layers, "harness output line " + std::to_string(lineno) + ": expected " +
                                                  std::to_string(outputs + layers) + " fields");
    std::vector<float> out(outputs);
    std::vector<std::uint32_t> spikes(layers);
    for (std::size_t i = 0; i < outputs + layers; ++i) {
      char* end = nullptr;
      if (i < outputs) {
        out[i] = static_cast<float>(std::strtod(cells[i].c_str(), &end));
      } else {
        spikes[i - outputs] = static_cast<std::uint32_t>(std::strtoul(cells[i].c_str(), &end, 10));
      }
      require(end != cells[i].c_str() && *end == '\0',
              "harness output line " + std::to_string(lineno) + ": bad field '" + cells[i] + "'");
    }
    trace.outputs.push_back(std::move(out));
    trace.spikes.push_back(std::move(spikes));
  }
  return trace;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ValidationReport validate_export(const ExportArtifact& artifact, const Rows& inputs, const ReferenceTrace& reference,
                                 double tolerance, const HarnessConfig& harness) {
  ValidationReport skipped;
  skipped.tolerance = tolerance;
  skipped.steps = inputs.size();
  skipped.status = ValidationStatus::skipped;
  if (harness.driver_source.empty()) {
    skipped.message = "no harness driver configured";
    return skipped;
  }
  if (!std::filesystem::exists(harness.driver_source)) {
    skipped.message = "harness driver not found: " + harness.driver_source.string();
    return skipped;
  }
  if (harness.c_compiler.empty()) {
    skipped.message = "no C compiler configured";
    return skipped;
  }

  const auto manifest = parse_manifest(artifact.manifest);
  const auto field = [&](const char* key) {
    const auto it = manifest.find(key);
    require(it != manifest.end(), std::string("artifact manifest lacks '") + key + "'");
    return static_cast<std::size_t>(std::stoull(it->second));
  };
  const std::size_t n_out = field("output_size");
  const std::size_t n_layers = field("layers");

  std::filesystem::path dir = harness.work_dir;
  if (dir.empty()) {
    std::random_device rd;
    dir = std::filesystem::temp_directory_path() /
          ("neuroflap-validate-" + std::to_string(::getpid()) + "-" + std::to_string(rd()));
  }
  std::filesystem::create_directories(dir);
  write_artifact(artifact, dir);
  const auto exe = dir / "harness";
  const auto log = dir / "build.log";

  std::string cmd = shell_quote(harness.c_compiler);
  for (const auto& f : harness.cflags) cmd += " " + shell_quote(f);
  cmd += " -I" + shell_quote(dir.string()) + " -DNEUROFLAP_MODEL_HEADER=" +
         shell_quote("\"" + artifact.header_name() + "\"") + " -DNEUROFLAP_PREFIX=" + artifact.prefix +
         " -DNEUROFLAP_INPUT_SIZE=" + std::to_string(field("input_size")) +
         " -DNEUROFLAP_OUTPUT_SIZE=" + std::to_string(n_out) + " -DNEUROFLAP_NUM_LAYERS=" + std::to_string(n_layers) +
         " " +
         shell_quote(harness.driver_source.string()) + " " + shell_quote((dir / artifact.kernel_name()).string()) +
         " -o " + shell_quote(exe.string()) + " > " + shell_quote(log.string()) + " 2>&1";
  if (run_command(cmd) != 0) {
    ValidationReport r = skipped;
    r.status = ValidationStatus::failed;
    r.message = "artifact failed to compile:\n" + read_text(log);
    return r;
  }

  const auto in_csv = dir / "input.csv";
  const auto out_csv = dir / "output.csv";
  write_harness_input(in_csv, inputs);
  const std::string run = shell_quote(exe.string()) + " " + shell_quote(in_csv.string()) + " " +
                          shell_quote(out_csv.string()) + " > " + shell_quote(log.string()) + " 2>&1";
  if (const int rc = run_command(run); rc != 0) {
    ValidationReport r = skipped;
    r.status = ValidationStatus::failed;
    r.message = "harness exited with status " + std::to_string(rc) + ":\n" + read_text(log);
    return r;
  }
  auto report = compare_traces(reference, read_harness_output(out_csv, n_out, n_layers), tolerance);
  if (harness.work_dir.empty()) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }
  return report;
}

void write_report(const ValidationReport& report, std::ostream& out) {
  out << "status: " << to_string(report.status) << '\n'
      << "steps: " << report.steps << '\n'
      << "tolerance: " << report.tolerance << '\n';
  out << "max_abs_deviation:";
  char buf[48];
  for (double d : report.max_abs_deviation) {
    std::snprintf(buf, sizeof(buf), " %.3g", d);
    out << buf;
  }
  out << '\n' << "spikes_match: " << (report.spikes_match ? "yes" : "no") << '\n';
  if (!report.message.empty()) out << "message: " << report.message << '\n';
}

}  // namespace neuroflap::codegen
