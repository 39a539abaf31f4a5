#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace neuroflap::snn {

enum class LayerKind { feedforward, recurrent };
enum class ExecMode { dense, event_driven };

/// Which signal the controller readout predicts.
/// pitch_offset and yaw_offset emit one stroke offset in degrees,
/// cpg_agnostic emits left/right servo pulses in microseconds.
enum class ControllerVariant { pitch_offset, yaw_offset, cpg_agnostic };

std::string_view to_string(LayerKind kind);
std::string_view to_string(ExecMode mode);
std::string_view to_string(ControllerVariant variant);
LayerKind parse_layer_kind(std::string_view text);
ExecMode parse_exec_mode(std::string_view text);
ControllerVariant parse_controller_variant(std::string_view text);

/// Number of controller outputs for a variant (1 for offsets, 2 for PWM).
std::size_t controller_outputs(ControllerVariant variant);

/// Row-major dense matrix of 32-bit floats.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n);

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct NeuronParams {
  std::vector<float> alpha;  // synaptic leak, (0,1)
  std::vector<float> beta;   // membrane leak, (0,1)
  std::vector<float> theta;  // firing threshold

  friend bool operator==(const NeuronParams&, const NeuronParams&) = default;
};

struct LayerState {
  std::vector<float> syn_current;
  std::vector<float> membrane;
  std::vector<std::uint8_t> spikes;

  explicit LayerState(std::size_t n = 0) : syn_current(n, 0.0f), membrane(n, 0.0f), spikes(n, 0) {}
  std::size_t size() const { return membrane.size(); }
  void reset();

  friend bool operator==(const LayerState&, const LayerState&) = default;
};

/// CUBA-LIF layer. The first layer of a subnetwork receives a continuous
/// input through w_in; later layers receive the previous layer's spikes.
struct SpikingLayer {
  LayerKind kind = LayerKind::feedforward;
  Matrix w_in;   // N x d_in
  Matrix w_rec;  // N x N, empty for feedforward layers
  NeuronParams params;
  LayerState state;

  // Per-tick scratch, sized once by prepare(); never serialized.
  std::vector<float> scratch_in;
  std::vector<float> scratch_rec;
  std::vector<std::uint32_t> active;

  std::size_t size() const { return w_in.rows; }
  std::size_t input_size() const { return w_in.cols; }
  void prepare();
  void validate() const;
};

struct Readout {
  Matrix w_out;  // O x M
};

/// One cascade stage (estimator or controller). Inputs and outputs cross this
/// boundary in physical units; the layers run in the scaled space.
struct SubNetwork {
  std::vector<SpikingLayer> layers;
  Readout readout;
  std::vector<float> input_scale;
  std::vector<float> output_scale;

  // Scratch for the scaled input and output.
  std::vector<float> scaled_in;
  std::vector<float> scaled_out;

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().input_size(); }
  std::size_t output_size() const { return readout.w_out.rows; }
  void prepare();
  void validate() const;
  void reset();
};

struct NetworkSpec {
  SubNetwork estimator;
  SubNetwork controller;
  ControllerVariant variant = ControllerVariant::pitch_offset;
  ExecMode mode = ExecMode::dense;

  std::vector<float> controller_in;  // scratch: [refs; state estimate]

  std::size_t imu_size() const { return estimator.input_size(); }
  std::size_t state_size() const { return estimator.output_size(); }
  /// d_r: controller input minus the estimator's contribution.
  std::size_t refs_size() const { return controller.input_size() - estimator.output_size(); }
  std::size_t control_size() const { return controller.output_size(); }

  void prepare();
  void validate() const;
};

struct NetworkShape {
  std::size_t imu_inputs = 6;
  std::size_t estimator_ff = 150;
  std::size_t estimator_rec = 150;
  std::size_t state_outputs = 3;
  std::size_t refs_inputs = 4;
  std::size_t controller_rec = 130;
  ControllerVariant variant = ControllerVariant::pitch_offset;
};

/// Zero-weight network of the given shape with unit scales and default neuron parameters.
NetworkSpec make_network(const NetworkShape& shape);
SubNetwork make_subnetwork(std::size_t inputs, std::span<const std::size_t> hidden,
                           std::span<const LayerKind> kinds, std::size_t outputs);

// ---- single-step primitives --------------------------------------------------

/// j = W_in x. Ascending-column accumulation per row.
std::vector<float> inject_input(const Matrix& w_in, std::span<const float> x);
void inject_input_into(const Matrix& w_in, std::span<const float> x, std::span<float> out);

/// I[t+1] = alpha I[t] + W_in S_ff + W_rec S_rec + U.
/// ff_spikes is empty for a layer fed by a continuous input; rec_spikes is empty
/// for a feedforward layer.
std::vector<float> step_synaptic_current(const LayerState& state, std::span<const std::uint8_t> ff_spikes,
                                         std::span<const std::uint8_t> rec_spikes,
                                         std::span<const float> injected, const SpikingLayer& layer);

/// V[t+1] = beta V[t] (1 - S[t]) + I[t], read from state.
std::vector<float> step_membrane(const LayerState& state, const SpikingLayer& layer);

/// S = H(V - theta) with H(0) = 1.
std::vector<std::uint8_t> fire(std::span<const float> membrane, std::span<const float> theta);

std::vector<float> readout(const Matrix& w_out, std::span<const std::uint8_t> spikes);

std::vector<std::uint32_t> active_set(std::span<const std::uint8_t> spikes);
void active_set_into(std::span<const std::uint8_t> spikes, std::vector<std::uint32_t>& out);

/// p_i = sum_{j in active} W_ij, ascending j.
std::vector<float> event_driven_accumulate(const Matrix& w, std::span<const std::uint32_t> active);
void event_driven_accumulate_into(const Matrix& w, std::span<const std::uint32_t> active, std::span<float> out);

/// W s for binary s, ascending j. Reference for the event-driven path.
void dense_spike_product_into(const Matrix& w, std::span<const std::uint8_t> spikes, std::span<float> out);

// ---- layer / network stepping -------------------------------------------------

/// Advance one layer by one tick. `input` is the continuous scaled input when
/// `spike_input` is empty; otherwise the presynaptic spike vector drives w_in.
void layer_step(SpikingLayer& layer, std::span<const float> input, std::span<const std::uint8_t> spike_input,
                ExecMode mode);

/// One tick of a subnetwork: scale, run layers in order, read out, unscale.
void subnetwork_step(SubNetwork& net, std::span<const float> physical_in, std::span<float> physical_out,
                     ExecMode mode);

struct StepResult {
  std::vector<float> state_estimate;
  std::vector<float> control;
};

/// One 100 Hz tick of the estimator -> controller cascade.
StepResult network_step(NetworkSpec& spec, std::span<const float> imu, std::span<const float> refs_meas);
void network_step_into(NetworkSpec& spec, std::span<const float> imu, std::span<const float> refs_meas,
                       std::span<float> state_out, std::span<float> control_out);

void reset_state(NetworkSpec& spec);

/// Spike count per layer (estimator layers first, then controller layers) in the current state.
std::vector<std::uint32_t> spike_counts(const NetworkSpec& spec);
std::size_t layer_count(const NetworkSpec& spec);

}  // namespace neuroflap::snn
