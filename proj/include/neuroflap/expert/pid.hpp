#pragma once

namespace neuroflap::expert {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

inline constexpr PidGains kPitchGains{0.6, 0.55, 0.05};
inline constexpr PidGains kYawGains{0.15, 0.0, 0.0};
inline constexpr double kDefaultOffsetLimitDeg = 15.0;

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool started = false;
};

struct PidTerms {
  double proportional = 0.0;
  double integral = 0.0;
  double derivative = 0.0;
  double output = 0.0;  // clamped sum
};

/// Discrete PID: trapezoidal integral, backward-difference derivative.
/// The first call treats the previous error as equal to the current one.
/// The integral is clamped so ki * integral stays within the offset limit.
PidTerms pid_terms(const PidGains& gains, PidState& state, double error, double dt,
                   double offset_limit = kDefaultOffsetLimitDeg);

double pid_step(const PidGains& gains, PidState& state, double error, double dt,
                double offset_limit = kDefaultOffsetLimitDeg);

}  // namespace neuroflap::expert
