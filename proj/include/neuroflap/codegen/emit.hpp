#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "neuroflap/snn/network.hpp"

namespace neuroflap::codegen {

inline constexpr int kArtifactFormatVersion = 1;

/// Generated C sources for one network plus a key: value manifest.
///
/// Entry points (with the default prefix "snn"):
///   void snn_init(void);
///   void snn_reset(void);
///   void snn_step(const float* in, float* out);   in = [imu; refs_meas], out = [state; control]
///   void snn_spike_counts(uint32_t* counts);      one count per layer, estimator first
struct ExportArtifact {
  std::string prefix = "snn";
  std::string header_text;
  std::string kernel_text;
  std::string manifest;

  std::string header_name() const { return prefix + "_model.h"; }
  std::string kernel_name() const { return prefix + "_model.c"; }
  friend bool operator==(const ExportArtifact&, const ExportArtifact&) = default;
};

/// Emits C99 implementing the reference runtime's per-tick semantics for the
/// given mode. Values are written as hex-float literals. Throws
/// ContractViolation on non-finite weights or parameters.
ExportArtifact emit(const snn::NetworkSpec& spec, snn::ExecMode mode, const std::string& prefix = "snn");

using Manifest = std::map<std::string, std::string>;
Manifest parse_manifest(const std::string& text);

/// Rejects the artifact (ContractViolation) when its manifest hash differs from
/// the hash of `spec` or from the hash compiled into the header.
void verify_artifact(const ExportArtifact& artifact, const snn::NetworkSpec& spec);

/// Writes header, kernel and manifest.txt into `dir` (created if needed).
void write_artifact(const ExportArtifact& artifact, const std::filesystem::path& dir);
ExportArtifact read_artifact(const std::filesystem::path& dir);

}  // namespace neuroflap::codegen
