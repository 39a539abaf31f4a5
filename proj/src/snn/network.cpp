#include "neuroflap/snn/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "neuroflap/error.hpp"

namespace neuroflap::snn {

namespace {

constexpr float kDefaultAlpha = 0.8f;
constexpr float kDefaultBeta = 0.9f;
constexpr float kDefaultTheta = 1.0f;

void require_binary(std::span<const std::uint8_t> spikes, const char* what) {
  for (auto s : spikes) {
    if (s > 1) throw ContractViolation(std::string(what) + ": spike vector is not binary");
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) { return kind == LayerKind::feedforward ? "feedforward" : "recurrent"; }

std::string_view to_string(ExecMode mode) { return mode == ExecMode::dense ? "dense" : "event_driven"; }

std::string_view to_string(ControllerVariant variant) {
  switch (variant) {
    case ControllerVariant::pitch_offset: return "pitch_offset";
    case ControllerVariant::yaw_offset: return "yaw_offset";
    case ControllerVariant::cpg_agnostic: return "cpg_agnostic";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view text) {
  if (text == "feedforward") return LayerKind::feedforward;
  if (text == "recurrent") return LayerKind::recurrent;
  throw ContractViolation("unknown layer kind: " + std::string(text));
}

ExecMode parse_exec_mode(std::string_view text) {
  if (text == "dense") return ExecMode::dense;
  if (text == "event_driven" || text == "event") return ExecMode::event_driven;
  throw ContractViolation("unknown execution mode: " + std::string(text));
}

ControllerVariant parse_controller_variant(std::string_view text) {
  if (text == "pitch_offset" || text == "pitch") return ControllerVariant::pitch_offset;
  if (text == "yaw_offset" || text == "yaw") return ControllerVariant::yaw_offset;
  if (text == "cpg_agnostic" || text == "pwm") return ControllerVariant::cpg_agnostic;
  throw ContractViolation("unknown controller variant: " + std::string(text));
}

std::size_t controller_outputs(ControllerVariant variant) {
  return variant == ControllerVariant::cpg_agnostic ? 2 : 1;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

void LayerState::reset() {
  std::fill(syn_current.begin(), syn_current.end(), 0.0f);
  std::fill(membrane.begin(), membrane.end(), 0.0f);
  std::fill(spikes.begin(), spikes.end(), std::uint8_t{0});
}

void SpikingLayer::prepare() {
  const std::size_t n = size();
  if (state.size() != n) state = LayerState(n);
  scratch_in.assign(n, 0.0f);
  scratch_rec.assign(n, 0.0f);
  active.clear();
  active.reserve(std::max(n, input_size()));
}

void SpikingLayer::validate() const {
  const std::size_t n = size();
  require(n > 0, "spiking layer has no neurons");
  require(w_in.data.size() == w_in.rows * w_in.cols, "w_in storage does not match its shape");
  if (kind == LayerKind::recurrent) {
    require(w_rec.rows == n && w_rec.cols == n, "recurrent weights must be N x N");
  } else {
    require(w_rec.empty() && w_rec.rows == 0, "feedforward layer carries recurrent weights");
  }
  require(params.alpha.size() == n && params.beta.size() == n && params.theta.size() == n,
          "neuron parameter length does not match layer size");
  for (std::size_t i = 0; i < n; ++i) {
    require(params.alpha[i] > 0.0f && params.alpha[i] < 1.0f, "alpha outside (0,1)");
    require(params.beta[i] > 0.0f && params.beta[i] < 1.0f, "beta outside (0,1)");
    require(std::isfinite(params.theta[i]), "theta is not finite");
  }
}

void SubNetwork::prepare() {
  for (auto& layer : layers) layer.prepare();
  scaled_in.assign(input_size(), 0.0f);
  scaled_out.assign(output_size(), 0.0f);
}

void SubNetwork::validate() const {
  require(!layers.empty(), "subnetwork has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (l > 0) require(layers[l].input_size() == layers[l - 1].size(), "layer input size does not match previous layer");
  }
  require(readout.w_out.cols == layers.back().size(), "readout columns must equal the final layer size");
  require(input_scale.size() == input_size(), "input scale length mismatch");
  require(output_scale.size() == output_size(), "output scale length mismatch");
  for (float c : input_scale) require(c != 0.0f && std::isfinite(c), "input scale entries must be finite and nonzero");
  for (float c : output_scale) require(c != 0.0f && std::isfinite(c), "output scale entries must be finite and nonzero");
}

void SubNetwork::reset() {
  for (auto& layer : layers) layer.state.reset();
}

void NetworkSpec::prepare() {
  estimator.prepare();
  controller.prepare();
  controller_in.assign(controller.input_size(), 0.0f);
}

void NetworkSpec::validate() const {
  estimator.validate();
  controller.validate();
  require(controller.input_size() > estimator.output_size(),
          "controller input must hold references plus the state estimate");
  require(controller.output_size() == controller_outputs(variant), "controller output count does not match variant");
}

SubNetwork make_subnetwork(std::size_t inputs, std::span<const std::size_t> hidden, std::span<const LayerKind> kinds,
                           std::size_t outputs) {
  require(hidden.size() == kinds.size() && !hidden.empty(), "layer sizes and kinds must align");
  SubNetwork net;
  std::size_t d = inputs;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    SpikingLayer layer;
    layer.kind = kinds[l];
    const std::size_t n = hidden[l];
    layer.w_in = Matrix(n, d);
    if (layer.kind == LayerKind::recurrent) layer.w_rec = Matrix(n, n);
    layer.params.alpha.assign(n, kDefaultAlpha);
    layer.params.beta.assign(n, kDefaultBeta);
    layer.params.theta.assign(n, kDefaultTheta);
    layer.state = LayerState(n);
    net.layers.push_back(std::move(layer));
    d = n;
  }
  net.readout.w_out = Matrix(outputs, d);
  net.input_scale.assign(inputs, 1.0f);
  net.output_scale.assign(outputs, 1.0f);
  net.prepare();
  return net;
}

NetworkSpec make_network(const NetworkShape& shape) {
  NetworkSpec spec;
  spec.variant = shape.variant;
  const std::size_t est_sizes[] = {shape.estimator_ff, shape.estimator_rec};
  const LayerKind est_kinds[] = {LayerKind::feedforward, LayerKind::recurrent};
  spec.estimator = make_subnetwork(shape.imu_inputs, est_sizes, est_kinds, shape.state_outputs);
  const std::size_t ctrl_sizes[] = {shape.controller_rec};
  const LayerKind ctrl_kinds[] = {LayerKind::recurrent};
  spec.controller = make_subnetwork(shape.refs_inputs + shape.state_outputs, ctrl_sizes, ctrl_kinds,
                                    controller_outputs(shape.variant));
  spec.prepare();
  return spec;
}

// ---- primitives ---------------------------------------------------------------

void inject_input_into(const Matrix& w_in, std::span<const float> x, std::span<float> out) {
  require(x.size() == w_in.cols, "inject_input: input length does not match w_in columns");
  require(out.size() == w_in.rows, "inject_input: output length does not match w_in rows");
  for (std::size_t i = 0; i < w_in.rows; ++i) {
    const float* w = w_in.data.data() + i * w_in.cols;
    float acc = 0.0f;
    for (std::size_t j = 0; j < w_in.cols; ++j) acc += w[j] * x[j];
    out[i] = acc;
  }
}

std::vector<float> inject_input(const Matrix& w_in, std::span<const float> x) {
  std::vector<float> out(w_in.rows);
  inject_input_into(w_in, x, out);
  return out;
}

void dense_spike_product_into(const Matrix& w, std::span<const std::uint8_t> spikes, std::span<float> out) {
  require(spikes.size() == w.cols, "spike vector length does not match matrix columns");
  require(out.size() == w.rows, "output length does not match matrix rows");
  for (std::size_t i = 0; i < w.rows; ++i) {
    const float* row = w.data.data() + i * w.cols;
    float acc = 0.0f;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * static_cast<float>(spikes[j]);
    out[i] = acc;
  }
}

void active_set_into(std::span<const std::uint8_t> spikes, std::vector<std::uint32_t>& out) {
  out.clear();
  for (std::size_t j = 0; j < spikes.size(); ++j) {
    if (spikes[j]) out.push_back(static_cast<std::uint32_t>(j));
  }
}

std::vector<std::uint32_t> active_set(std::span<const std::uint8_t> spikes) {
  require_binary(spikes, "active_set");
  std::vector<std::uint32_t> out;
  active_set_into(spikes, out);
  return out;
}

void event_driven_accumulate_into(const Matrix& w, std::span<const std::uint32_t> active, std::span<float> out) {
  require(out.size() == w.rows, "output length does not match matrix rows");
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::uint32_t j : active) {
    require(j < w.cols, "active index out of range");
    const float* col = w.data.data() + j;
    for (std::size_t i = 0; i < w.rows; ++i) out[i] += col[i * w.cols];
  }
}

std::vector<float> event_driven_accumulate(const Matrix& w, std::span<const std::uint32_t> active) {
  std::vector<float> out(w.rows);
  event_driven_accumulate_into(w, active, out);
  return out;
}

std::vector<float> step_synaptic_current(const LayerState& state, std::span<const std::uint8_t> ff_spikes,
                                         std::span<const std::uint8_t> rec_spikes, std::span<const float> injected,
                                         const SpikingLayer& layer) {
  const std::size_t n = layer.size();
  require(state.size() == n && injected.size() == n, "step_synaptic_current: state or injected length mismatch");
  require_binary(ff_spikes, "step_synaptic_current");
  require_binary(rec_spikes, "step_synaptic_current");
  require(layer.kind == LayerKind::recurrent || rec_spikes.empty(), "feedforward layer given recurrent spikes");

  std::vector<float> ff(n, 0.0f);
  std::vector<float> rec(n, 0.0f);
  if (!ff_spikes.empty()) dense_spike_product_into(layer.w_in, ff_spikes, ff);
  if (!rec_spikes.empty()) dense_spike_product_into(layer.w_rec, rec_spikes, rec);

  std::vector<float> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    float cur = layer.params.alpha[i] * state.syn_current[i];
    cur += ff[i];
    cur += rec[i];
    cur += injected[i];
    next[i] = cur;
  }
  return next;
}

std::vector<float> step_membrane(const LayerState& state, const SpikingLayer& layer) {
  const std::size_t n = layer.size();
  require(state.size() == n, "step_membrane: state length mismatch");
  std::vector<float> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float gate = 1.0f - static_cast<float>(state.spikes[i]);
    next[i] = layer.params.beta[i] * state.membrane[i] * gate + state.syn_current[i];
  }
  return next;
}

std::vector<std::uint8_t> fire(std::span<const float> membrane, std::span<const float> theta) {
  require(membrane.size() == theta.size(), "fire: membrane and threshold lengths differ");
  std::vector<std::uint8_t> spikes(membrane.size());
  for (std::size_t i = 0; i < membrane.size(); ++i) {
    require(!std::isnan(membrane[i]), "fire: membrane potential is NaN");
    spikes[i] = (membrane[i] - theta[i] >= 0.0f) ? 1 : 0;
  }
  return spikes;
}

std::vector<float> readout(const Matrix& w_out, std::span<const std::uint8_t> spikes) {
  require_binary(spikes, "readout");
  std::vector<float> out(w_out.rows);
  dense_spike_product_into(w_out, spikes, out);
  return out;
}

// ---- stepping -------------------------------------------------------------------

void layer_step(SpikingLayer& layer, std::span<const float> input, std::span<const std::uint8_t> spike_input,
                ExecMode mode) {
  const std::size_t n = layer.size();
  auto& st = layer.state;
  const bool event = mode == ExecMode::event_driven;

  if (spike_input.empty()) {
    inject_input_into(layer.w_in, input, layer.scratch_in);
  } else if (event) {
    active_set_into(spike_input, layer.active);
    event_driven_accumulate_into(layer.w_in, layer.active, layer.scratch_in);
  } else {
    dense_spike_product_into(layer.w_in, spike_input, layer.scratch_in);
  }

  const bool recurrent = layer.kind == LayerKind::recurrent;
  if (recurrent) {
    if (event) {
      active_set_into(st.spikes, layer.active);
      event_driven_accumulate_into(layer.w_rec, layer.active, layer.scratch_rec);
    } else {
      dense_spike_product_into(layer.w_rec, st.spikes, layer.scratch_rec);
    }
  }

  const float* alpha = layer.params.alpha.data();
  const float* beta = layer.params.beta.data();
  const float* theta = layer.params.theta.data();
  for (std::size_t i = 0; i < n; ++i) {
    const float prev_current = st.syn_current[i];
    const float gate = 1.0f - static_cast<float>(st.spikes[i]);
    float cur = alpha[i] * prev_current;
    cur += layer.scratch_in[i];
    if (recurrent) cur += layer.scratch_rec[i];
    st.syn_current[i] = cur;
    const float v = beta[i] * st.membrane[i] * gate + prev_current;
    st.membrane[i] = v;
    st.spikes[i] = (v - theta[i] >= 0.0f) ? 1 : 0;
  }
}

void subnetwork_step(SubNetwork& net, std::span<const float> physical_in, std::span<float> physical_out,
                     ExecMode mode) {
  require(physical_in.size() == net.input_size(), "subnetwork input length mismatch");
  require(physical_out.size() == net.output_size(), "subnetwork output length mismatch");
  for (std::size_t k = 0; k < physical_in.size(); ++k) net.scaled_in[k] = physical_in[k] * net.input_scale[k];

  layer_step(net.layers.front(), net.scaled_in, {}, mode);
  for (std::size_t l = 1; l < net.layers.size(); ++l) {
    layer_step(net.layers[l], {}, net.layers[l - 1].state.spikes, mode);
  }

  auto& last = net.layers.back();
  if (mode == ExecMode::event_driven) {
    active_set_into(last.state.spikes, last.active);
    event_driven_accumulate_into(net.readout.w_out, last.active, net.scaled_out);
  } else {
    dense_spike_product_into(net.readout.w_out, last.state.spikes, net.scaled_out);
  }
  for (std::size_t o = 0; o < physical_out.size(); ++o) physical_out[o] = net.scaled_out[o] / net.output_scale[o];
}

void network_step_into(NetworkSpec& spec, std::span<const float> imu, std::span<const float> refs_meas,
                       std::span<float> state_out, std::span<float> control_out) {
  require(imu.size() == spec.imu_size(), "network_step: IMU length mismatch");
  require(refs_meas.size() == spec.refs_size(), "network_step: reference/measurement length mismatch");
  if (spec.controller_in.size() != spec.controller.input_size()) spec.prepare();

  subnetwork_step(spec.estimator, imu, state_out, spec.mode);
  std::copy(refs_meas.begin(), refs_meas.end(), spec.controller_in.begin());
  std::copy(state_out.begin(), state_out.end(), spec.controller_in.begin() + static_cast<long>(refs_meas.size()));
  subnetwork_step(spec.controller, spec.controller_in, control_out, spec.mode);
}

StepResult network_step(NetworkSpec& spec, std::span<const float> imu, std::span<const float> refs_meas) {
  StepResult result{std::vector<float>(spec.state_size()), std::vector<float>(spec.control_size())};
  network_step_into(spec, imu, refs_meas, result.state_estimate, result.control);
  return result;
}

void reset_state(NetworkSpec& spec) {
  spec.estimator.reset();
  spec.controller.reset();
}

std::size_t layer_count(const NetworkSpec& spec) { return spec.estimator.layers.size() + spec.controller.layers.size(); }

std::vector<std::uint32_t> spike_counts(const NetworkSpec& spec) {
  std::vector<std::uint32_t> counts;
  counts.reserve(layer_count(spec));
  for (const auto* net : {&spec.estimator, &spec.controller}) {
    for (const auto& layer : net->layers) {
      std::uint32_t c = 0;
      for (auto s : layer.state.spikes) c += s;
      counts.push_back(c);
    }
  }
  return counts;
}

}  // namespace neuroflap::snn
