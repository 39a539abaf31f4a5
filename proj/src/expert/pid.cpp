#include "neuroflap/expert/pid.hpp"

#include <algorithm>
#include <cmath>

#include "neuroflap/error.hpp"

namespace neuroflap::expert {

PidTerms pid_terms(const PidGains& gains, PidState& state, double error, double dt, double offset_limit) {
  require(dt > 0.0, "pid_step: dt must be positive");
  const double prev = state.started ? state.prev_error : error;
  state.integral += 0.5 * dt * (error + prev);
  if (gains.ki != 0.0) {
    const double bound = offset_limit / std::abs(gains.ki);
    state.integral = std::clamp(state.integral, -bound, bound);
  }
  const double derivative = (error - prev) / dt;
  state.prev_error = error;
  state.started = true;

  PidTerms terms;
  terms.proportional = gains.kp * error;
  terms.integral = gains.ki * state.integral;
  terms.derivative = gains.kd * derivative;
  terms.output = std::clamp(terms.proportional + terms.integral + terms.derivative, -offset_limit, offset_limit);
  return terms;
}

double pid_step(const PidGains& gains, PidState& state, double error, double dt, double offset_limit) {
  return pid_terms(gains, state, error, dt, offset_limit).output;
}

}  // namespace neuroflap::expert
