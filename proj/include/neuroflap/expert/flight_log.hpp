#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "neuroflap/expert/madgwick.hpp"
#include "neuroflap/expert/pid.hpp"
#include "neuroflap/expert/signals.hpp"
#include "neuroflap/expert/synth.hpp"

namespace neuroflap::expert {

/// One 10 ms tick of a demonstration log.
struct FlightRecord {
  ImuSample imu;
  double pitch_ref = 0.0;  // deg
  double yaw_ref = 0.0;    // deg
  AttitudeEstimate attitude;
  double pitch_filtered = 0.0;  // deg
  double pitch_offset = 0.0;    // deg
  double yaw_offset = 0.0;      // deg
  double pwm_left = 0.0;        // us
  double pwm_right = 0.0;       // us
};

using FlightLog = std::vector<FlightRecord>;

struct ReferenceSample {
  double pitch = 0.0;
  double yaw = 0.0;
};

/// Baseline flight-stack settings used to label demonstrations.
struct ExpertConfig {
  double dt = 0.01;
  std::size_t bias_samples = 200;
  double madgwick_gain = kDefaultMadgwickGain;
  double rls_forgetting = 0.95;
  PidGains pitch_gains = kPitchGains;
  PidGains yaw_gains = kYawGains;
  double offset_limit_deg = kDefaultOffsetLimitDeg;
  CpgParams cpg;
  ServoMap servo;
};

/// The expert one tick at a time, with the gyro bias fixed up front.
class ExpertController {
 public:
  ExpertController(const ExpertConfig& config, const Vec3& gyro_bias);
  /// Everything except attitude.yaw_rate, which is a backward difference filled in afterwards.
  FlightRecord step(const ImuSample& imu, const ReferenceSample& ref);

 private:
  ExpertConfig config_;
  Vec3 bias_;
  MadgwickFilter madgwick_;
  RlsConstantFilter rls_;
  YawIntegrator yaw_;
  PidState pitch_pid_;
  PidState yaw_pid_;
  std::size_t tick_ = 0;
};

/// Gyro-bias subtraction -> Madgwick -> RLS pitch filter -> PID -> wing mixing
/// -> CPG -> servo map, recording every intermediate signal.
FlightLog generate_expert_labels(std::span<const ImuSample> imu, std::span<const ReferenceSample> refs,
                                 const ExpertConfig& config = {});

/// Replays the IMU and references of a stored log through the expert.
FlightLog replay_expert(const FlightLog& log, const ExpertConfig& config = {});

/// Mean gyro over the log's stationary prefix.
Vec3 log_gyro_bias(const FlightLog& log, std::size_t bias_samples);

struct LogSpec {
  SynthConfig synth;
  ImuNoise noise;
  ExpertConfig expert;
};

/// Closed-loop flight: the expert flies the body model through a synthetic
/// scenario and its labels are recorded. Deterministic per seed. The body is
/// held on the scenario's disturbances alone until the bias window is filled.
FlightLog synthesize_log(const LogSpec& spec, std::uint64_t seed, SynthTrajectory* truth = nullptr);

// ---- CSV ----------------------------------------------------------------------

extern const char* const kFlightLogColumns[18];

void write_flight_log(const FlightLog& log, std::ostream& out);
FlightLog read_flight_log(std::istream& in);
void write_flight_log_file(const FlightLog& log, const std::filesystem::path& path);
FlightLog read_flight_log_file(const std::filesystem::path& path);

/// Log files in a directory, sorted by name.
std::vector<std::filesystem::path> list_flight_logs(const std::filesystem::path& dir);

}  // namespace neuroflap::expert
