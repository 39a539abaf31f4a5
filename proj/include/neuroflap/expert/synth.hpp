#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "neuroflap/expert/signals.hpp"

namespace neuroflap::expert {

/// Scenario generator settings. Angles in degrees, times in seconds.
struct SynthConfig {
  double duration_s = 120.0;
  double dt = 0.01;
  double stationary_s = 2.0;  // level and still at the start, for gyro-bias calibration
  double ramp_in_s = 0.5;
  bool pitch_references = true;
  bool yaw_references = true;
  double pitch_ref_range_deg = 20.0;
  double yaw_ref_range_deg = 60.0;
  double segment_min_s = 4.0;
  double segment_max_s = 12.0;
  double lag_min_s = 0.15;  // body pitch response time constant, drawn per segment
  double lag_max_s = 0.6;
  double trim_offset_deg = 3.0;  // randomized pitch trim per segment, decaying
  double trim_decay_s = 3.0;
  double disturbance_deg = 6.0;  // transient kicks
  double disturbance_rate_hz = 0.05;
  double disturbance_decay_s = 0.8;
  double roll_wander_deg = 4.0;
  double undulation_hz = kNominalFlapHz;
  double pitch_undulation_deg = 2.0;
  double roll_undulation_deg = 1.0;
  double undulation_phase_rad = -0.6;  // body response lag relative to the stroke oscillator
  // Body response to the stroke offsets.
  double pitch_gain = 1.25;     // equilibrium pitch per degree of pitch offset
  double yaw_gain_dps = 4.0;    // yaw rate (deg/s) per degree of yaw offset
};

/// Exogenous signals of one flight. The closed-loop simulation adds the body's
/// response to the controller.
struct SynthScenario {
  std::vector<double> time;
  std::vector<double> pitch_ref;
  std::vector<double> yaw_ref;
  std::vector<double> pitch_lag;          // s
  std::vector<double> pitch_disturbance;  // deg, shifts the pitch equilibrium
  std::vector<double> yaw_disturbance;    // deg/s
  std::vector<double> roll;               // deg, complete roll motion
  std::vector<double> pitch_undulation;   // deg, added to the body pitch
  std::size_t stationary = 0;             // leading ticks held level and still
  std::size_t size() const { return time.size(); }
};

SynthScenario synth_scenario(const SynthConfig& config, std::uint64_t seed);

/// True attitude over a flight, degrees.
struct SynthTrajectory {
  std::vector<double> time;
  std::vector<double> roll;
  std::vector<double> pitch;
  std::vector<double> yaw;
  std::size_t size() const { return time.size(); }
  void push_back(double t, double r, double p, double y);
};

/// First-order pitch response towards pitch_gain * offset + disturbance, and a
/// yaw rate proportional to the yaw offset.
class BodyModel {
 public:
  BodyModel(const SynthConfig& config, const SynthScenario& scenario) : cfg_(config), scen_(scenario) {}
  /// Attitude at tick k (call in order, advancing between calls).
  void attitude(std::size_t k, double& roll, double& pitch, double& yaw) const;
  /// Moves from tick k to k + 1 under the given offsets.
  void advance(std::size_t k, double pitch_offset_deg, double yaw_offset_deg);

 private:
  const SynthConfig& cfg_;
  const SynthScenario& scen_;
  double pitch_ = 0.0;
  double yaw_ = 0.0;
};

struct ImuNoise {
  double gyro_sigma = 0.003;   // rad/s
  double accel_sigma = 0.05;   // m/s^2
  double gyro_bias_max = 0.01; // rad/s, per-axis uniform
};

inline constexpr double kGravity = 9.81;

/// Body rates from Euler-angle derivatives (degrees in, rad/s out).
Vec3 euler_rates_to_body(double roll_deg, double pitch_deg, double roll_rate, double pitch_rate, double yaw_rate);
/// Specific force of a still body at the given attitude, m/s^2.
Vec3 gravity_in_body(double roll_deg, double pitch_deg);

/// Streaming IMU model. Euler rates are backward differences of consecutive
/// attitudes (zero on the first sample).
class ImuSimulator {
 public:
  ImuSimulator(double dt, const ImuNoise& noise, std::uint64_t seed);
  ImuSample sample(double t, double roll_deg, double pitch_deg, double yaw_deg);
  const Vec3& bias() const { return bias_; }

 private:
  double dt_;
  ImuNoise noise_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> unit_{0.0, 1.0};
  Vec3 bias_{};
  bool started_ = false;
  double prev_[3] = {0.0, 0.0, 0.0};
};

std::vector<ImuSample> synth_imu(const SynthTrajectory& traj, double dt, const ImuNoise& noise, std::uint64_t seed);
std::vector<ImuSample> synth_imu(const SynthTrajectory& traj, double dt);

}  // namespace neuroflap::expert
