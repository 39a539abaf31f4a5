#include "neuroflap/codegen/emit.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "neuroflap/error.hpp"
#include "neuroflap/snn/serialize.hpp"

namespace neuroflap::codegen {

namespace {

std::string upper(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string hex_literal(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%af", static_cast<double>(v));
  return buf;
}

void require_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) require(std::isfinite(v), "emit: non-finite value in " + what);
}

void emit_array(std::ostringstream& out, const std::string& name, std::span<const float> values) {
  out << "static const float " << name << "[" << values.size() << "] = {";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i % 6 == 0) out << "\n   ";
    out << ' ' << hex_literal(values[i]) << (i + 1 < values.size() ? "," : "");
  }
  out << "\n};\n";
}

struct LayerNames {
  std::string base;  // e.g. snn_est0
  std::size_t size;
  std::size_t inputs;
  bool recurrent;
};

std::vector<LayerNames> layer_names(const std::string& prefix, const std::string& stage, const snn::SubNetwork& net) {
  std::vector<LayerNames> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    out.push_back({prefix + "_" + stage + std::to_string(l), layer.size(), layer.input_size(),
                   layer.kind == snn::LayerKind::recurrent});
  }
  return out;
}

void emit_stage_weights(std::ostringstream& out, const std::string& prefix, const std::string& stage,
                        const snn::SubNetwork& net) {
  const auto names = layer_names(prefix, stage, net);
  emit_array(out, prefix + "_" + stage + "_in_scale", net.input_scale);
  emit_array(out, prefix + "_" + stage + "_out_scale", net.output_scale);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const auto& n = names[l].base;
    emit_array(out, n + "_w_in", layer.w_in.data);
    if (names[l].recurrent) emit_array(out, n + "_w_rec", layer.w_rec.data);
    emit_array(out, n + "_alpha", layer.params.alpha);
    emit_array(out, n + "_beta", layer.params.beta);
    emit_array(out, n + "_theta", layer.params.theta);
  }
  emit_array(out, prefix + "_" + stage + "_w_out", net.readout.w_out.data);
}

void check_stage(const snn::SubNetwork& net, const std::string& stage) {
  require_finite(net.input_scale, stage + " input scale");
  require_finite(net.output_scale, stage + " output scale");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const std::string where = stage + " layer " + std::to_string(l);
    require_finite(layer.w_in.data, where + " w_in");
    require_finite(layer.w_rec.data, where + " w_rec");
    require_finite(layer.params.alpha, where + " alpha");
    require_finite(layer.params.beta, where + " beta");
    require_finite(layer.params.theta, where + " theta");
  }
  require_finite(net.readout.w_out.data, stage + " w_out");
}

const char* kHelpers = R"(static void P_project(const float* w, uint32_t rows, uint32_t cols, const float* x, float* out) {
  uint32_t i, j;
  for (i = 0; i < rows; ++i) {
    const float* r = w + (size_t)i * cols;
    float acc = 0.0f;
    for (j = 0; j < cols; ++j) acc += r[j] * x[j];
    out[i] = acc;
  }
}

static void P_dense_spikes(const float* w, uint32_t rows, uint32_t cols, const uint8_t* s, float* out) {
  uint32_t i, j;
  for (i = 0; i < rows; ++i) {
    const float* r = w + (size_t)i * cols;
    float acc = 0.0f;
    for (j = 0; j < cols; ++j) acc += r[j] * (float)s[j];
    out[i] = acc;
  }
}

static uint32_t P_active_set(const uint8_t* s, uint32_t n, uint32_t* active) {
  uint32_t j, count = 0;
  for (j = 0; j < n; ++j) {
    if (s[j]) active[count++] = j;
  }
  return count;
}

static void P_accumulate(const float* w, uint32_t rows, uint32_t cols, const uint32_t* active, uint32_t n_active,
                         float* out) {
  uint32_t i, k;
  for (i = 0; i < rows; ++i) out[i] = 0.0f;
  for (k = 0; k < n_active; ++k) {
    const float* c = w + active[k];
    for (i = 0; i < rows; ++i) out[i] += c[(size_t)i * cols];
  }
}

static void P_lif(uint32_t n, const float* alpha, const float* beta, const float* theta, const float* in,
                  const float* rec, float* cur, float* mem, uint8_t* spk) {
  uint32_t i;
  for (i = 0; i < n; ++i) {
    const float prev = cur[i];
    const float gate = 1.0f - (float)spk[i];
    float c = alpha[i] * prev;
    c += in[i];
    if (rec) c += rec[i];
    cur[i] = c;
    {
      const float v = beta[i] * mem[i] * gate + prev;
      mem[i] = v;
      spk[i] = (v - theta[i] >= 0.0f) ? 1u : 0u;
    }
  }
}
)";

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

/// Emits "spike-driven product of w (rows x cols) with spikes into out".
void emit_spike_product(std::ostringstream& out, const std::string& prefix, snn::ExecMode mode, const std::string& w,
                        std::size_t rows, std::size_t cols, const std::string& spikes, const std::string& dst) {
  if (mode == snn::ExecMode::event_driven) {
    out << "  {\n    uint32_t active[" << cols << "];\n"
        << "    const uint32_t n_active = " << prefix << "_active_set(" << spikes << ", " << cols << "u, active);\n"
        << "    " << prefix << "_accumulate(" << w << ", " << rows << "u, " << cols << "u, active, n_active, " << dst
        << ");\n  }\n";
  } else {
    out << "  " << prefix << "_dense_spikes(" << w << ", " << rows << "u, " << cols << "u, " << spikes << ", " << dst
        << ");\n";
  }
}

void emit_stage_step(std::ostringstream& out, const std::string& prefix, const std::string& stage,
                     const snn::SubNetwork& net, snn::ExecMode mode) {
  const auto names = layer_names(prefix, stage, net);
  const std::string x = prefix + "_" + stage + "_x";
  const std::string y = prefix + "_" + stage + "_y";
  for (std::size_t l = 0; l < names.size(); ++l) {
    const auto& n = names[l];
    if (l == 0) {
      out << "  " << prefix << "_project(" << n.base << "_w_in, " << n.size << "u, " << n.inputs << "u, " << x << ", "
          << n.base << "_in);\n";
    } else {
      emit_spike_product(out, prefix, mode, n.base + "_w_in", n.size, n.inputs, names[l - 1].base + "_spk",
                         n.base + "_in");
    }
    if (n.recurrent) {
      emit_spike_product(out, prefix, mode, n.base + "_w_rec", n.size, n.size, n.base + "_spk", n.base + "_rec");
    }
    out << "  " << prefix << "_lif(" << n.size << "u, " << n.base << "_alpha, " << n.base << "_beta, " << n.base
        << "_theta, " << n.base << "_in, " << (n.recurrent ? n.base + "_rec" : std::string("0")) << ", " << n.base
        << "_cur, " << n.base << "_mem, " << n.base << "_spk);\n";
  }
  emit_spike_product(out, prefix, mode, prefix + "_" + stage + "_w_out", net.output_size(), names.back().size,
                     names.back().base + "_spk", y);
}

}  // namespace

ExportArtifact emit(const snn::NetworkSpec& spec, snn::ExecMode mode, const std::string& prefix) {
  spec.validate();
  check_stage(spec.estimator, "estimator");
  check_stage(spec.controller, "controller");
  require(!prefix.empty() && (std::isalpha(static_cast<unsigned char>(prefix[0])) || prefix[0] == '_'),
          "emit: prefix must be a C identifier");
  for (char c : prefix) {
    require(std::isalnum(static_cast<unsigned char>(c)) || c == '_', "emit: prefix must be a C identifier");
  }

  ExportArtifact art;
  art.prefix = prefix;
  const std::string P = upper(prefix);
  const std::string hash = snn::network_hash(spec);
  const std::size_t imu = spec.imu_size();
  const std::size_t refs = spec.refs_size();
  const std::size_t state = spec.state_size();
  const std::size_t control = spec.control_size();
  const auto est = layer_names(prefix, "est", spec.estimator);
  const auto ctl = layer_names(prefix, "ctl", spec.controller);

  std::ostringstream h;
  h << "/* Generated by neuroflap. Do not edit. */\n"
    << "#ifndef " << P << "_MODEL_H\n#define " << P << "_MODEL_H\n\n"
    << "#include <stdint.h>\n\n"
    << "#define " << P << "_NETWORK_HASH \"" << hash << "\"\n"
    << "#define " << P << "_EVENT_DRIVEN " << (mode == snn::ExecMode::event_driven ? 1 : 0) << "\n"
    << "#define " << P << "_IMU_SIZE " << imu << "\n"
    << "#define " << P << "_REFS_SIZE " << refs << "\n"
    << "#define " << P << "_STATE_SIZE " << state << "\n"
    << "#define " << P << "_CONTROL_SIZE " << control << "\n"
    << "#define " << P << "_INPUT_SIZE " << imu + refs << "\n"
    << "#define " << P << "_OUTPUT_SIZE " << state + control << "\n"
    << "#define " << P << "_NUM_LAYERS " << est.size() + ctl.size() << "\n";
  for (const auto* names : {&est, &ctl}) {
    for (const auto& n : *names) h << "#define " << upper(n.base) << "_SIZE " << n.size << "\n";
  }
  h << "\n#ifdef __cplusplus\nextern \"C\" {\n#endif\n\n"
    << "void " << prefix << "_init(void);\n"
    << "void " << prefix << "_reset(void);\n"
    << "/* in: " << P << "_INPUT_SIZE values [imu; refs]. out: " << P << "_OUTPUT_SIZE values [state; control]. */\n"
    << "void " << prefix << "_step(const float* in, float* out);\n"
    << "void " << prefix << "_spike_counts(uint32_t* counts);\n"
    << "\n#ifdef __cplusplus\n}\n#endif\n\n"
    << "#ifdef " << P << "_DEFINE_WEIGHTS\n";
  emit_stage_weights(h, prefix, "est", spec.estimator);
  emit_stage_weights(h, prefix, "ctl", spec.controller);
  h << "#endif\n\n#endif\n";
  art.header_text = h.str();

  std::ostringstream k;
  k << "/* Generated by neuroflap. Do not edit. Build with -ffp-contract=off. */\n"
    << "#include <stddef.h>\n#include <stdint.h>\n\n"
    << "#define " << P << "_DEFINE_WEIGHTS\n"
    << "#include \"" << art.header_name() << "\"\n\n";
  for (const auto* names : {&est, &ctl}) {
    for (const auto& n : *names) {
      k << "static float " << n.base << "_cur[" << n.size << "];\n"
        << "static float " << n.base << "_mem[" << n.size << "];\n"
        << "static uint8_t " << n.base << "_spk[" << n.size << "];\n"
        << "static float " << n.base << "_in[" << n.size << "];\n";
      if (n.recurrent) k << "static float " << n.base << "_rec[" << n.size << "];\n";
    }
  }
  k << "static float " << prefix << "_est_x[" << imu << "];\n"
    << "static float " << prefix << "_est_y[" << state << "];\n"
    << "static float " << prefix << "_ctl_x[" << refs + state << "];\n"
    << "static float " << prefix << "_ctl_y[" << control << "];\n\n";
  k << replace_all(kHelpers, "P_", prefix + "_") << "\n";

  k << "void " << prefix << "_reset(void) {\n  uint32_t i;\n";
  for (const auto* names : {&est, &ctl}) {
    for (const auto& n : *names) {
      k << "  for (i = 0; i < " << n.size << "u; ++i) {\n"
        << "    " << n.base << "_cur[i] = 0.0f;\n"
        << "    " << n.base << "_mem[i] = 0.0f;\n"
        << "    " << n.base << "_spk[i] = 0u;\n  }\n";
    }
  }
  k << "}\n\nvoid " << prefix << "_init(void) { " << prefix << "_reset(); }\n\n";

  k << "void " << prefix << "_step(const float* in, float* out) {\n  uint32_t k;\n"
    << "  for (k = 0; k < " << imu << "u; ++k) " << prefix << "_est_x[k] = in[k] * " << prefix << "_est_in_scale[k];\n";
  emit_stage_step(k, prefix, "est", spec.estimator, mode);
  k << "  for (k = 0; k < " << state << "u; ++k) out[k] = " << prefix << "_est_y[k] / " << prefix
    << "_est_out_scale[k];\n"
    << "  for (k = 0; k < " << refs << "u; ++k) " << prefix << "_ctl_x[k] = in[" << imu << "u + k] * " << prefix
    << "_ctl_in_scale[k];\n"
    << "  for (k = 0; k < " << state << "u; ++k) " << prefix << "_ctl_x[" << refs << "u + k] = out[k] * " << prefix
    << "_ctl_in_scale[" << refs << "u + k];\n";
  emit_stage_step(k, prefix, "ctl", spec.controller, mode);
  k << "  for (k = 0; k < " << control << "u; ++k) out[" << state << "u + k] = " << prefix << "_ctl_y[k] / "
    << prefix << "_ctl_out_scale[k];\n}\n\n";

  k << "void " << prefix << "_spike_counts(uint32_t* counts) {\n  uint32_t i, c;\n";
  std::size_t slot = 0;
  for (const auto* names : {&est, &ctl}) {
    for (const auto& n : *names) {
      k << "  c = 0;\n  for (i = 0; i < " << n.size << "u; ++i) c += " << n.base << "_spk[i];\n"
        << "  counts[" << slot++ << "] = c;\n";
    }
  }
  k << "}\n";
  art.kernel_text = k.str();

  std::ostringstream m;
  m << "format: neuroflap-artifact\n"
    << "format_version: " << kArtifactFormatVersion << "\n"
    << "network_hash: " << hash << "\n"
    << "network_format_version: " << snn::kNetworkFormatVersion << "\n"
    << "mode: " << snn::to_string(mode) << "\n"
    << "numeric_format: float32 ieee754, hex-float literals\n"
    << "variant: " << snn::to_string(spec.variant) << "\n"
    << "prefix: " << prefix << "\n"
    << "header: " << art.header_name() << "\n"
    << "kernel: " << art.kernel_name() << "\n"
    << "input_size: " << imu + refs << "\n"
    << "output_size: " << state + control << "\n"
    << "layers: " << est.size() + ctl.size() << "\n";
  art.manifest = m.str();
  return art;
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    require(colon != std::string::npos, "manifest: malformed line '" + line + "'");
    std::string value = line.substr(colon + 1);
    const auto first = value.find_first_not_of(' ');
    value = first == std::string::npos ? "" : value.substr(first);
    m[line.substr(0, colon)] = value;
  }
  return m;
}

void verify_artifact(const ExportArtifact& artifact, const snn::NetworkSpec& spec) {
  const auto m = parse_manifest(artifact.manifest);
  const auto it = m.find("network_hash");
  require(it != m.end(), "artifact rejected: manifest has no network hash");
  const std::string expected = snn::network_hash(spec);
  require(it->second == expected, "artifact rejected: manifest hash " + it->second + " does not match network " +
                                      expected);
  const std::string define = "_NETWORK_HASH \"" + expected + "\"";
  require(artifact.header_text.find(define) != std::string::npos,
          "artifact rejected: header hash does not match the manifest");
}

void write_artifact(const ExportArtifact& artifact, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<std::string, const std::string*> files[] = {{artifact.header_name(), &artifact.header_text},
                                                              {artifact.kernel_name(), &artifact.kernel_text},
                                                              {"manifest.txt", &artifact.manifest}};
  for (const auto& [name, text] : files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << *text;
  }
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExportArtifact read_artifact(const std::filesystem::path& dir) {
  ExportArtifact art;
  art.manifest = slurp(dir / "manifest.txt");
  const auto m = parse_manifest(art.manifest);
  const auto it = m.find("prefix");
  require(it != m.end(), "artifact manifest has no prefix");
  art.prefix = it->second;
  art.header_text = slurp(dir / art.header_name());
  art.kernel_text = slurp(dir / art.kernel_name());
  return art;
}

}  // namespace neuroflap::codegen
