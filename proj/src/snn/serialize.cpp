#include "neuroflap/snn/serialize.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "neuroflap/error.hpp"

namespace neuroflap::snn {

namespace {

constexpr const char* kMagic = "neuroflap-network";

void write_values(std::ostream& out, const char* key, std::span<const float> values) {
  out << key << ' ' << values.size();
  char buf[48];
  for (float v : values) {
    std::snprintf(buf, sizeof(buf), " %a", static_cast<double>(v));
    out << buf;
  }
  out << '\n';
}

void write_subnet(std::ostream& out, const char* name, const SubNetwork& net) {
  out << "subnet " << name << '\n';
  write_values(out, "input_scale", net.input_scale);
  write_values(out, "output_scale", net.output_scale);
  out << "layers " << net.layers.size() << '\n';
  for (const auto& layer : net.layers) {
    out << "layer " << to_string(layer.kind) << ' ' << layer.size() << ' ' << layer.input_size() << '\n';
    write_values(out, "w_in", layer.w_in.data);
    if (layer.kind == LayerKind::recurrent) write_values(out, "w_rec", layer.w_rec.data);
    write_values(out, "alpha", layer.params.alpha);
    write_values(out, "beta", layer.params.beta);
    write_values(out, "theta", layer.params.theta);
  }
  out << "readout " << net.readout.w_out.rows << ' ' << net.readout.w_out.cols << '\n';
  write_values(out, "w_out", net.readout.w_out.data);
  out << "end\n";
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ContractViolation("network file truncated");
    return w;
  }

  void expect(const std::string& token) {
    auto w = word();
    if (w != token) throw ContractViolation("network file: expected '" + token + "', found '" + w + "'");
  }

  std::size_t count() {
    auto w = word();
    char* end = nullptr;
    auto v = std::strtoull(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') throw ContractViolation("network file: bad count '" + w + "'");
    return static_cast<std::size_t>(v);
  }

  std::vector<float> values(const std::string& key, std::size_t expected) {
    auto out = values(key);
    if (out.size() != expected) throw ContractViolation("network file: '" + key + "' has wrong length");
    return out;
  }

  std::vector<float> values(const std::string& key) {
    expect(key);
    std::vector<float> out(count());
    for (auto& v : out) {
      auto w = word();
      char* end = nullptr;
      v = std::strtof(w.c_str(), &end);
      if (end == w.c_str() || *end != '\0') throw ContractViolation("network file: bad number '" + w + "'");
    }
    return out;
  }

 private:
  std::istream& in_;
};

SubNetwork read_subnet(Reader& r, const std::string& name) {
  r.expect("subnet");
  r.expect(name);
  SubNetwork net;
  net.input_scale = r.values("input_scale");
  net.output_scale = r.values("output_scale");
  r.expect("layers");
  const auto n_layers = r.count();
  for (std::size_t l = 0; l < n_layers; ++l) {
    r.expect("layer");
    SpikingLayer layer;
    layer.kind = parse_layer_kind(r.word());
    const auto n = r.count();
    const auto d = r.count();
    layer.w_in = Matrix(n, d);
    layer.w_in.data = r.values("w_in", n * d);
    if (layer.kind == LayerKind::recurrent) {
      layer.w_rec = Matrix(n, n);
      layer.w_rec.data = r.values("w_rec", n * n);
    }
    layer.params.alpha = r.values("alpha", n);
    layer.params.beta = r.values("beta", n);
    layer.params.theta = r.values("theta", n);
    layer.state = LayerState(n);
    net.layers.push_back(std::move(layer));
  }
  r.expect("readout");
  const auto rows = r.count();
  const auto cols = r.count();
  net.readout.w_out = Matrix(rows, cols);
  net.readout.w_out.data = r.values("w_out", rows * cols);
  r.expect("end");
  return net;
}

}  // namespace

void save_network(const NetworkSpec& spec, std::ostream& out) {
  out << kMagic << ' ' << kNetworkFormatVersion << '\n';
  out << "variant " << to_string(spec.variant) << '\n';
  out << "mode " << to_string(spec.mode) << '\n';
  write_subnet(out, "estimator", spec.estimator);
  write_subnet(out, "controller", spec.controller);
}

NetworkSpec load_network(std::istream& in) {
  Reader r(in);
  r.expect(kMagic);
  const auto version = r.count();
  if (version != static_cast<std::size_t>(kNetworkFormatVersion)) {
    throw ContractViolation("unsupported network format version " + std::to_string(version));
  }
  NetworkSpec spec;
  r.expect("variant");
  spec.variant = parse_controller_variant(r.word());
  r.expect("mode");
  spec.mode = parse_exec_mode(r.word());
  spec.estimator = read_subnet(r, "estimator");
  spec.controller = read_subnet(r, "controller");
  spec.validate();
  spec.prepare();
  return spec;
}

std::string network_to_string(const NetworkSpec& spec) {
  std::ostringstream out;
  save_network(spec, out);
  return out.str();
}

NetworkSpec network_from_string(const std::string& text) {
  std::istringstream in(text);
  return load_network(in);
}

void save_network_file(const NetworkSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_network(spec, out);
}

NetworkSpec load_network_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_network(in);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string network_hash(const NetworkSpec& spec) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(network_to_string(spec));
  return out.str();
}

}  // namespace neuroflap::snn
