#include "neuroflap/expert/signals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "neuroflap/error.hpp"

namespace neuroflap::expert {

double cpg_step(const CpgParams& params, double t, double offset_deg) {
  return params.amplitude_deg * std::sin(2.0 * kPi * params.frequency_hz * t + params.phase_rad) + offset_deg;
}

WingOffsets offsets_to_wing_commands(double pitch_offset_deg, double yaw_offset_deg) {
  return {pitch_offset_deg + yaw_offset_deg, pitch_offset_deg - yaw_offset_deg};
}

double angle_to_pwm(double stroke_deg, const ServoMap& servo) {
  const double gain = servo.half_range_us / servo.travel_deg;
  const double pulse = servo.center_us + gain * stroke_deg;
  return std::clamp(pulse, servo.center_us - servo.half_range_us, servo.center_us + servo.half_range_us);
}

double wrap_angle(double deg) {
  double r = std::fmod(deg + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  // fmod can round up to exactly 360 for tiny negative inputs
  if (r >= 360.0) r -= 360.0;
  return r - 180.0;
}

std::vector<double> yaw_rate_target(std::span<const double> yaw_deg, double dt_ms) {
  require(yaw_deg.size() >= 2, "yaw_rate_target needs at least two samples");
  require(dt_ms > 0.0, "yaw_rate_target: dt must be positive");
  std::vector<double> rate(yaw_deg.size());
  for (std::size_t t = 1; t < yaw_deg.size(); ++t) rate[t] = wrap_angle(yaw_deg[t] - yaw_deg[t - 1]) / dt_ms;
  rate[0] = rate[1];
  return rate;
}

double integrate_yaw(double prev_yaw_deg, double prev_rate_dps, double rate_dps, double dt) {
  require(dt > 0.0, "integrate_yaw: dt must be positive");
  return wrap_angle(prev_yaw_deg + 0.5 * dt * (prev_rate_dps + rate_dps));
}

double YawIntegrator::update(double rate_dps, double dt) {
  if (started_) yaw_ = integrate_yaw(yaw_, prev_rate_, rate_dps, dt);
  started_ = true;
  prev_rate_ = rate_dps;
  return yaw_;
}

double RlsConstantFilter::update(double sample) {
  if (!started_) {
    estimate_ = sample;
    covariance_ = p0_;
    started_ = true;
    return estimate_;
  }
  const double gain = covariance_ / (lambda_ + covariance_);
  estimate_ += gain * (sample - estimate_);
  covariance_ = (1.0 - gain) * covariance_ / lambda_;
  return estimate_;
}

std::vector<double> rls_filter_pitch(std::span<const double> raw_pitch, double forgetting) {
  RlsConstantFilter filter(forgetting);
  std::vector<double> out(raw_pitch.size());
  for (std::size_t i = 0; i < raw_pitch.size(); ++i) out[i] = filter.update(raw_pitch[i]);
  return out;
}

Vec3 gyro_bias_calibrate(std::span<const ImuSample> stationary) {
  require(stationary.size() >= kMinBiasSamples,
          "gyro bias calibration needs at least " + std::to_string(kMinBiasSamples) + " samples");
  Vec3 sum{};
  for (const auto& s : stationary) {
    for (int k = 0; k < 3; ++k) sum[k] += s.gyro[k];
  }
  const double n = static_cast<double>(stationary.size());
  return {sum[0] / n, sum[1] / n, sum[2] / n};
}

}  // namespace neuroflap::expert
