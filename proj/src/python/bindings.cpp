#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "neuroflap/bench/bench.hpp"
#include "neuroflap/codegen/emit.hpp"
#include "neuroflap/error.hpp"
#include "neuroflap/pipeline.hpp"
#include "neuroflap/snn/serialize.hpp"
#include "neuroflap/train/loss.hpp"

namespace py = pybind11;
using namespace neuroflap;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

bench::Rows to_rows(const FloatArray& a, std::size_t width) {
  if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != width) {
    throw py::value_error("expected an (n, " + std::to_string(width) + ") array");
  }
  bench::Rows rows(a.shape(0));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    rows[i].resize(width);
    for (std::size_t j = 0; j < width; ++j) rows[i][j] = r(i, j);
  }
  return rows;
}

std::size_t row_width(const snn::NetworkSpec& s) { return s.imu_size() + s.refs_size(); }

py::dict report_dict(const pipeline::EvalReport& r) {
  py::dict d;
  d["logs"] = r.logs;
  d["ticks"] = r.ticks;
  auto channels = [](const std::vector<pipeline::ChannelMetrics>& cs) {
    py::dict out;
    for (const auto& c : cs) out[py::str(c.name)] = py::make_tuple(c.rmse, c.rho);
    return out;
  };
  d["estimator"] = channels(r.estimator);
  d["controller"] = channels(r.controller);
  d["pwm"] = py::make_tuple(r.pwm.rmse, r.pwm.rho);
  d["layer_spike_rate"] = r.layer_spike_rate;
  d["mean_spike_rate"] = r.mean_spike_rate;
  return d;
}

// Stateful runtime wrapper around a network spec.
class Network {
 public:
  explicit Network(snn::NetworkSpec spec) : spec_(std::move(spec)) { spec_.prepare(); }

  static Network load(const std::filesystem::path& path) { return Network(snn::load_network_file(path)); }
  void save(const std::filesystem::path& path) const { snn::save_network_file(spec_, path); }

  py::tuple step(const std::vector<float>& imu, const std::vector<float>& refs) {
    if (imu.size() != spec_.imu_size() || refs.size() != spec_.refs_size()) throw py::value_error("input size mismatch");
    std::vector<float> state(spec_.state_size()), control(spec_.control_size());
    snn::network_step_into(spec_, imu, refs, state, control);
    return py::make_tuple(state, control);
  }

  // Runs every row from a fresh state; returns (states, controls).
  py::tuple run(const FloatArray& rows) {
    const auto in = to_rows(rows, row_width(spec_));
    snn::reset_state(spec_);
    const std::size_t d = spec_.imu_size();
    py::array_t<float> states({in.size(), spec_.state_size()});
    py::array_t<float> controls({in.size(), spec_.control_size()});
    auto s = states.mutable_unchecked<2>();
    auto c = controls.mutable_unchecked<2>();
    std::vector<float> state(spec_.state_size()), control(spec_.control_size());
    for (std::size_t t = 0; t < in.size(); ++t) {
      std::span<const float> row(in[t]);
      snn::network_step_into(spec_, row.first(d), row.subspan(d), state, control);
      for (std::size_t k = 0; k < state.size(); ++k) s(t, k) = state[k];
      for (std::size_t k = 0; k < control.size(); ++k) c(t, k) = control[k];
    }
    return py::make_tuple(states, controls);
  }

  void reset() { snn::reset_state(spec_); }
  std::vector<std::uint32_t> spike_counts() const { return snn::spike_counts(spec_); }
  std::string mode() const { return std::string(snn::to_string(spec_.mode)); }
  void set_mode(const std::string& m) { spec_.mode = snn::parse_exec_mode(m); }
  std::string hash() const { return snn::network_hash(spec_); }

  py::dict count_macs(const FloatArray& rows) const {
    const auto trace = bench::record_spikes(spec_, to_rows(rows, row_width(spec_)));
    const auto m = bench::macs_from_trace(spec_, trace);
    py::dict d;
    d["ticks"] = m.ticks;
    d["input_projection"] = m.input_projection;
    d["dense_spike_mediated"] = m.dense_spike_mediated;
    d["event_spike_mediated"] = m.event_spike_mediated;
    d["dense"] = m.dense();
    d["event_driven"] = m.event_driven();
    d["mean_spike_rate"] = bench::mean_spike_rate(spec_, trace);
    return d;
  }

  py::dict emit(const std::string& mode, const std::string& prefix) const {
    const auto art = codegen::emit(spec_, snn::parse_exec_mode(mode), prefix);
    py::dict d;
    d[py::str(art.header_name())] = art.header_text;
    d[py::str(art.kernel_name())] = art.kernel_text;
    d["manifest.txt"] = art.manifest;
    return d;
  }

  void export_to(const std::filesystem::path& dir, const std::string& mode, const std::string& prefix) const {
    codegen::write_artifact(codegen::emit(spec_, snn::parse_exec_mode(mode), prefix), dir);
  }

  py::dict evaluate(const std::filesystem::path& data_dir, std::size_t skip) const {
    pipeline::EvalOptions opt;
    opt.skip = skip;
    return report_dict(pipeline::evaluate(spec_, pipeline::read_logs(data_dir), opt));
  }

  std::size_t imu_size() const { return spec_.imu_size(); }
  std::size_t refs_size() const { return spec_.refs_size(); }
  std::size_t state_size() const { return spec_.state_size(); }
  std::size_t control_size() const { return spec_.control_size(); }
  std::string variant() const { return std::string(snn::to_string(spec_.variant)); }

 private:
  snn::NetworkSpec spec_;
};

std::size_t gen_data(const std::filesystem::path& out, double minutes, double log_seconds, std::uint64_t seed,
                     double flap_hz) {
  pipeline::GenDataConfig cfg;
  cfg.minutes = minutes;
  cfg.log_seconds = log_seconds;
  cfg.seed = seed;
  cfg.flap_hz = flap_hz;
  const auto logs = pipeline::generate_logs(cfg);
  pipeline::write_logs(logs, out);
  return logs.size();
}

py::tuple train_network(const std::filesystem::path& data_dir, const std::string& variant, std::size_t estimator_ff,
                        std::size_t estimator_rec, std::size_t controller_rec, std::size_t epochs,
                        std::size_t batch_size, double learning_rate, std::size_t window, std::size_t stride,
                        unsigned long long seed) {
  pipeline::NetConfig net;
  net.estimator_ff = estimator_ff;
  net.estimator_rec = estimator_rec;
  net.controller_rec = controller_rec;
  net.variant = snn::parse_controller_variant(variant);
  train::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.window_len = window;
  cfg.stride = stride;
  cfg.seed = seed;
  cfg.validate();
  const auto logs = pipeline::read_logs(data_dir);
  auto models = [&] {
    py::gil_scoped_release release;
    return pipeline::train_models(logs, pipeline::Backend::snn, net, cfg);
  }();
  py::dict history;
  for (const auto* stage : {&models.estimator, &models.controller}) {
    std::vector<double> losses{stage->history.initial_loss};
    for (const auto& e : stage->history.epochs) losses.push_back(e.train_loss);
    history[stage == &models.estimator ? "estimator" : "controller"] = losses;
  }
  return py::make_tuple(Network(std::move(models.snn)), history);
}

py::dict evaluate_expert(const std::filesystem::path& data_dir) {
  return report_dict(pipeline::evaluate_expert(pipeline::read_logs(data_dir), {}, {}));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spiking flight-control networks: data, training, runtime, export and benchmarks";

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

  py::class_<Network>(m, "Network")
      .def_static("load", &Network::load, py::arg("path"))
      .def("save", &Network::save, py::arg("path"))
      .def("step", &Network::step, py::arg("imu"), py::arg("refs"))
      .def("run", &Network::run, py::arg("rows"))
      .def("reset", &Network::reset)
      .def("spike_counts", &Network::spike_counts)
      .def_property("mode", &Network::mode, &Network::set_mode)
      .def_property_readonly("hash", &Network::hash)
      .def_property_readonly("variant", &Network::variant)
      .def_property_readonly("imu_size", &Network::imu_size)
      .def_property_readonly("refs_size", &Network::refs_size)
      .def_property_readonly("state_size", &Network::state_size)
      .def_property_readonly("control_size", &Network::control_size)
      .def("count_macs", &Network::count_macs, py::arg("rows"))
      .def("emit", &Network::emit, py::arg("mode") = "event_driven", py::arg("prefix") = "snn")
      .def("export", &Network::export_to, py::arg("out_dir"), py::arg("mode") = "event_driven",
           py::arg("prefix") = "snn")
      .def("evaluate", &Network::evaluate, py::arg("data_dir"), py::arg("skip") = 100);

  m.def("gen_data", &gen_data, py::arg("out_dir"), py::arg("minutes") = 20.0, py::arg("log_seconds") = 120.0,
        py::arg("seed") = 1, py::arg("flap_hz") = expert::kNominalFlapHz);
  m.def("train", &train_network, py::arg("data_dir"), py::arg("variant") = "pitch_offset",
        py::arg("estimator_ff") = 150, py::arg("estimator_rec") = 150, py::arg("controller_rec") = 130,
        py::arg("epochs") = 20, py::arg("batch_size") = 4, py::arg("learning_rate") = 1e-3,
        py::arg("window") = 2500, py::arg("stride") = 400, py::arg("seed") = 1);
  m.def("evaluate_expert", &evaluate_expert, py::arg("data_dir"));
  m.def("huber", &train::huber, py::arg("error"), py::arg("delta") = 1.0);
  m.def("surrogate_grad", &train::surrogate_grad, py::arg("v"), py::arg("theta"), py::arg("kappa") = 2.0);
}
