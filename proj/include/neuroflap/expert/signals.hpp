#pragma once

#include <array>
#include <span>
#include <vector>

namespace neuroflap::expert {

using Vec3 = std::array<double, 3>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegPerRad = 180.0 / kPi;
inline constexpr double kRadPerDeg = kPi / 180.0;
inline constexpr double kNominalFlapHz = 3.25;

struct CpgParams {
  double amplitude_deg = 30.0;
  double frequency_hz = kNominalFlapHz;
  double phase_rad = 0.0;
};

/// Stroke angle zeta = A sin(2 pi f t + phi) + o, in degrees.
double cpg_step(const CpgParams& params, double t, double offset_deg);

struct WingOffsets {
  double left = 0.0;
  double right = 0.0;
};

/// Symmetric pitch offset plus antisymmetric yaw offset.
WingOffsets offsets_to_wing_commands(double pitch_offset_deg, double yaw_offset_deg);

struct ServoMap {
  double center_us = 1500.0;
  double travel_deg = 60.0;
  double half_range_us = 500.0;
};

/// Affine stroke-angle to pulse-width map, clamped to the servo's pulse range.
double angle_to_pwm(double stroke_deg, const ServoMap& servo = {});

/// Wraps into [-180, 180).
double wrap_angle(double deg);

/// Backward difference of a yaw sequence, wrapped before dividing, in degrees
/// per millisecond. The first element repeats the second.
std::vector<double> yaw_rate_target(std::span<const double> yaw_deg, double dt_ms = 10.0);

/// Trapezoidal yaw update from two consecutive rate samples (degrees/s), wrapped.
double integrate_yaw(double prev_yaw_deg, double prev_rate_dps, double rate_dps, double dt);

/// Streaming form of integrate_yaw with the optional one-time initial offset.
class YawIntegrator {
 public:
  explicit YawIntegrator(double initial_offset_deg = 0.0) : yaw_(wrap_angle(initial_offset_deg)) {}
  double update(double rate_dps, double dt);
  double yaw() const { return yaw_; }

 private:
  double yaw_;
  double prev_rate_ = 0.0;
  bool started_ = false;
};

/// Forgetting-factor recursive least-squares fit of a local constant.
class RlsConstantFilter {
 public:
  explicit RlsConstantFilter(double forgetting = 0.95, double initial_covariance = 1.0)
      : lambda_(forgetting), p0_(initial_covariance) {}
  double update(double sample);
  void reset() { started_ = false; }

 private:
  double lambda_;
  double p0_;
  double estimate_ = 0.0;
  double covariance_ = 0.0;
  bool started_ = false;
};

std::vector<double> rls_filter_pitch(std::span<const double> raw_pitch, double forgetting = 0.95);

struct ImuSample {
  Vec3 gyro{};   // rad/s, body frame
  Vec3 accel{};  // m/s^2, body frame
  double timestamp = 0.0;
};

inline constexpr std::size_t kMinBiasSamples = 100;

/// Per-axis mean gyro reading over a stationary stretch.
Vec3 gyro_bias_calibrate(std::span<const ImuSample> stationary);

}  // namespace neuroflap::expert
