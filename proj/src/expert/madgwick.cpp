#include "neuroflap/expert/madgwick.hpp"

#include <algorithm>
#include <cmath>

namespace neuroflap::expert {

Quaternion quaternion_from_euler(double roll_rad, double pitch_rad, double yaw_rad) {
  const double cr = std::cos(roll_rad * 0.5), sr = std::sin(roll_rad * 0.5);
  const double cp = std::cos(pitch_rad * 0.5), sp = std::sin(pitch_rad * 0.5);
  const double cy = std::cos(yaw_rad * 0.5), sy = std::sin(yaw_rad * 0.5);
  return {cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy,
          cr * cp * sy - sr * sp * cy};
}

std::array<double, 3> euler_degrees(const Quaternion& q) {
  const auto [w, x, y, z] = q;
  const double roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
  const double pitch = std::asin(std::clamp(2.0 * (w * y - z * x), -1.0, 1.0));
  const double yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  return {roll * kDegPerRad, pitch * kDegPerRad, yaw * kDegPerRad};
}

AttitudeEstimate MadgwickFilter::update(const Vec3& gyro, const Vec3& accel, double dt) {
  auto& [q0, q1, q2, q3] = q_;
  const double gx = gyro[0], gy = gyro[1], gz = gyro[2];

  double qd0 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz);
  double qd1 = 0.5 * (q0 * gx + q2 * gz - q3 * gy);
  double qd2 = 0.5 * (q0 * gy - q1 * gz + q3 * gx);
  double qd3 = 0.5 * (q0 * gz + q1 * gy - q2 * gx);

  const double anorm = std::sqrt(accel[0] * accel[0] + accel[1] * accel[1] + accel[2] * accel[2]);
  if (anorm > 0.0 && beta_ != 0.0) {
    const double ax = accel[0] / anorm, ay = accel[1] / anorm, az = accel[2] / anorm;
    const double q0q0 = q0 * q0, q1q1 = q1 * q1, q2q2 = q2 * q2, q3q3 = q3 * q3;

    // Gradient of the gravity-direction error f(q, a) = q* g q - a.
    double s0 = 4.0 * q0 * q2q2 + 2.0 * q2 * ax + 4.0 * q0 * q1q1 - 2.0 * q1 * ay;
    double s1 = 4.0 * q1 * q3q3 - 2.0 * q3 * ax + 4.0 * q0q0 * q1 - 2.0 * q0 * ay - 4.0 * q1 + 8.0 * q1 * q1q1 +
                8.0 * q1 * q2q2 + 4.0 * q1 * az;
    double s2 = 4.0 * q0q0 * q2 + 2.0 * q0 * ax + 4.0 * q2 * q3q3 - 2.0 * q3 * ay - 4.0 * q2 + 8.0 * q2 * q1q1 +
                8.0 * q2 * q2q2 + 4.0 * q2 * az;
    double s3 = 4.0 * q1q1 * q3 - 2.0 * q1 * ax + 4.0 * q2q2 * q3 - 2.0 * q2 * ay;
    const double snorm = std::sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3);
    if (snorm > 0.0) {
      qd0 -= beta_ * s0 / snorm;
      qd1 -= beta_ * s1 / snorm;
      qd2 -= beta_ * s2 / snorm;
      qd3 -= beta_ * s3 / snorm;
    }
  }

  q0 += qd0 * dt;
  q1 += qd1 * dt;
  q2 += qd2 * dt;
  q3 += qd3 * dt;
  const double n = std::sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3);
  q0 /= n;
  q1 /= n;
  q2 /= n;
  q3 /= n;

  const auto e = euler_degrees(q_);
  return {e[0], e[1], e[2], 0.0};
}

}  // namespace neuroflap::expert
