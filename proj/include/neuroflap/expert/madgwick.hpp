#pragma once

#include <array>

#include "neuroflap/expert/signals.hpp"

namespace neuroflap::expert {

/// Unit quaternion (w, x, y, z), body -> earth.
using Quaternion = std::array<double, 4>;

Quaternion quaternion_from_euler(double roll_rad, double pitch_rad, double yaw_rad);

struct AttitudeEstimate {
  double roll = 0.0;      // deg
  double pitch = 0.0;     // deg
  double yaw = 0.0;       // deg
  double yaw_rate = 0.0;  // deg/s
};

inline constexpr double kDefaultMadgwickGain = 0.1;

/// Six-axis gradient-descent attitude filter (gyro integration plus an
/// accelerometer correction step of size beta_gain).
class MadgwickFilter {
 public:
  explicit MadgwickFilter(double beta_gain = kDefaultMadgwickGain, Quaternion initial = {1.0, 0.0, 0.0, 0.0})
      : beta_(beta_gain), q_(initial) {}

  /// Returns roll/pitch in degrees; yaw from the quaternion is filled in but
  /// the label pipeline reconstructs yaw separately.
  AttitudeEstimate update(const Vec3& gyro, const Vec3& accel, double dt);

  const Quaternion& quaternion() const { return q_; }

 private:
  double beta_;
  Quaternion q_;
};

/// Roll, pitch, yaw (degrees) of a body -> earth quaternion, ZYX convention.
std::array<double, 3> euler_degrees(const Quaternion& q);

}  // namespace neuroflap::expert
