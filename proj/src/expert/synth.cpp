#include "neuroflap/expert/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "neuroflap/error.hpp"

namespace neuroflap::expert {

namespace {

struct Segment {
  std::size_t start;
  double lag_s;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Piecewise reference profile: holds/steps, slow sweeps, ramps and
/// saturation episodes. Zero before `start`.
std::vector<double> reference_profile(const SynthConfig& cfg, std::size_t n, std::size_t start, double range,
                                      std::mt19937_64& rng, std::vector<Segment>& segments) {
  std::vector<double> ref(n, 0.0);
  double current = 0.0;
  std::size_t i = start;
  while (i < n) {
    const auto len = static_cast<std::size_t>(uniform(rng, cfg.segment_min_s, cfg.segment_max_s) / cfg.dt);
    const std::size_t end = std::min(n, i + std::max<std::size_t>(len, 1));
    segments.push_back({i, uniform(rng, cfg.lag_min_s, cfg.lag_max_s)});
    const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
    switch (kind) {
      case 0: {  // hold / step
        const double v = uniform(rng, -0.7 * range, 0.7 * range);
        for (std::size_t k = i; k < end; ++k) ref[k] = v;
        current = v;
        break;
      }
      case 1: {  // slow sweep
        const double center = uniform(rng, -0.4 * range, 0.4 * range);
        const double amp = uniform(rng, 0.2 * range, 0.6 * range);
        const double freq = uniform(rng, 0.05, 0.25);
        for (std::size_t k = i; k < end; ++k) {
          ref[k] = center + amp * std::sin(2.0 * kPi * freq * static_cast<double>(k - i) * cfg.dt);
        }
        current = ref[end - 1];
        break;
      }
      case 2: {  // ramp
        const double target = uniform(rng, -range, range);
        const double span = static_cast<double>(end - i);
        for (std::size_t k = i; k < end; ++k) ref[k] = current + (target - current) * static_cast<double>(k - i) / span;
        current = ref[end - 1];
        break;
      }
      default: {  // saturation episode
        const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        const double v = sign * uniform(rng, 0.9 * range, range);
        for (std::size_t k = i; k < end; ++k) ref[k] = v;
        current = v;
        break;
      }
    }
    i = end;
  }
  return ref;
}

/// Per-tick body lag and decaying trim from the reference segments.
void segment_signals(const SynthConfig& cfg, const std::vector<Segment>& segments, double trim_range,
                     std::mt19937_64& rng, std::vector<double>& lag_out, std::vector<double>& trim_out) {
  double lag = cfg.lag_max_s;
  double trim = 0.0;
  std::size_t trim_start = 0;
  std::size_t seg = 0;
  for (std::size_t k = 0; k < lag_out.size(); ++k) {
    if (seg < segments.size() && segments[seg].start == k) {
      lag = segments[seg].lag_s;
      trim = uniform(rng, -trim_range, trim_range);
      trim_start = k;
      ++seg;
    }
    lag_out[k] = lag;
    const double elapsed = static_cast<double>(k - trim_start) * cfg.dt;
    trim_out[k] = seg > 0 ? trim * std::exp(-elapsed / cfg.trim_decay_s) : 0.0;
  }
}

void add_disturbances(const SynthConfig& cfg, std::vector<double>& signal, std::size_t start, double magnitude,
                      std::mt19937_64& rng) {
  const double p = cfg.disturbance_rate_hz * cfg.dt;
  double level = 0.0;
  const double decay = std::exp(-cfg.dt / cfg.disturbance_decay_s);
  for (std::size_t k = start; k < signal.size(); ++k) {
    level *= decay;
    if (std::bernoulli_distribution(p)(rng)) level += uniform(rng, -magnitude, magnitude);
    signal[k] += level;
  }
}

}  // namespace

SynthScenario synth_scenario(const SynthConfig& cfg, std::uint64_t seed) {
  require(cfg.dt > 0.0 && cfg.duration_s > 0.0, "synth_scenario: duration and dt must be positive");
  require(cfg.lag_min_s > 0.0 && cfg.lag_max_s >= cfg.lag_min_s, "synth_scenario: invalid lag range");
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s / cfg.dt));
  const auto start = std::min(n, static_cast<std::size_t>(std::llround(cfg.stationary_s / cfg.dt)));

  SynthScenario sc;
  sc.stationary = start;
  sc.time.resize(n);
  for (std::size_t k = 0; k < n; ++k) sc.time[k] = static_cast<double>(k) * cfg.dt;

  std::vector<Segment> pitch_segments;
  std::vector<Segment> yaw_segments;
  sc.pitch_ref = cfg.pitch_references ? reference_profile(cfg, n, start, cfg.pitch_ref_range_deg, rng, pitch_segments)
                                      : std::vector<double>(n, 0.0);
  sc.yaw_ref = cfg.yaw_references ? reference_profile(cfg, n, start, cfg.yaw_ref_range_deg, rng, yaw_segments)
                                  : std::vector<double>(n, 0.0);

  sc.pitch_lag.assign(n, cfg.lag_max_s);
  sc.pitch_disturbance.assign(n, 0.0);
  segment_signals(cfg, pitch_segments, cfg.pitch_references ? cfg.trim_offset_deg : 0.0, rng, sc.pitch_lag,
                  sc.pitch_disturbance);
  sc.yaw_disturbance.assign(n, 0.0);
  sc.roll.assign(n, 0.0);
  sc.pitch_undulation.assign(n, 0.0);

  const bool perturb = cfg.pitch_references || cfg.yaw_references;
  if (perturb) {
    add_disturbances(cfg, sc.pitch_disturbance, start, cfg.disturbance_deg, rng);
    add_disturbances(cfg, sc.roll, start, 0.5 * cfg.disturbance_deg, rng);
    if (cfg.yaw_references) add_disturbances(cfg, sc.yaw_disturbance, start, cfg.disturbance_deg, rng);
  }

  double wander_amp[2], wander_freq[2], wander_phase[2];
  for (int w = 0; w < 2; ++w) {
    wander_amp[w] = perturb ? uniform(rng, 0.25, 0.5) * cfg.roll_wander_deg : 0.0;
    wander_freq[w] = uniform(rng, 0.03, 0.2);
    wander_phase[w] = uniform(rng, 0.0, 2.0 * kPi);
  }

  for (std::size_t k = 0; k < n; ++k) {
    const double t = sc.time[k];
    double env = 0.0;
    if (k >= start) {
      const double since = t - cfg.stationary_s;
      env = since >= cfg.ramp_in_s || cfg.ramp_in_s <= 0.0 ? 1.0 : 0.5 - 0.5 * std::cos(kPi * since / cfg.ramp_in_s);
    }
    const double phase = 2.0 * kPi * cfg.undulation_hz * t + cfg.undulation_phase_rad;
    double roll = 0.0;
    for (int w = 0; w < 2; ++w) roll += wander_amp[w] * std::sin(2.0 * kPi * wander_freq[w] * t + wander_phase[w]);
    sc.roll[k] = env * (sc.roll[k] + roll + cfg.roll_undulation_deg * std::sin(phase));
    sc.pitch_undulation[k] = env * cfg.pitch_undulation_deg * std::sin(phase);
  }
  return sc;
}

void SynthTrajectory::push_back(double t, double r, double p, double y) {
  time.push_back(t);
  roll.push_back(r);
  pitch.push_back(p);
  yaw.push_back(y);
}

void BodyModel::attitude(std::size_t k, double& roll, double& pitch, double& yaw) const {
  roll = scen_.roll[k];
  pitch = pitch_ + scen_.pitch_undulation[k];
  yaw = yaw_;
}

void BodyModel::advance(std::size_t k, double pitch_offset_deg, double yaw_offset_deg) {
  const double target = cfg_.pitch_gain * pitch_offset_deg + scen_.pitch_disturbance[k];
  pitch_ += (cfg_.dt / scen_.pitch_lag[k]) * (target - pitch_);
  yaw_ += cfg_.dt * (cfg_.yaw_gain_dps * yaw_offset_deg + scen_.yaw_disturbance[k]);
}

Vec3 euler_rates_to_body(double roll_deg, double pitch_deg, double roll_rate, double pitch_rate, double yaw_rate) {
  const double phi = roll_deg * kRadPerDeg;
  const double theta = pitch_deg * kRadPerDeg;
  return {roll_rate - yaw_rate * std::sin(theta),
          pitch_rate * std::cos(phi) + yaw_rate * std::sin(phi) * std::cos(theta),
          -pitch_rate * std::sin(phi) + yaw_rate * std::cos(phi) * std::cos(theta)};
}

Vec3 gravity_in_body(double roll_deg, double pitch_deg) {
  const double phi = roll_deg * kRadPerDeg;
  const double theta = pitch_deg * kRadPerDeg;
  return {-kGravity * std::sin(theta), kGravity * std::sin(phi) * std::cos(theta),
          kGravity * std::cos(phi) * std::cos(theta)};
}

ImuSimulator::ImuSimulator(double dt, const ImuNoise& noise, std::uint64_t seed) : dt_(dt), noise_(noise), rng_(seed) {
  require(dt > 0.0, "ImuSimulator: dt must be positive");
  for (auto& b : bias_) b = noise.gyro_bias_max > 0.0 ? uniform(rng_, -noise.gyro_bias_max, noise.gyro_bias_max) : 0.0;
}

ImuSample ImuSimulator::sample(double t, double roll_deg, double pitch_deg, double yaw_deg) {
  double rates[3] = {0.0, 0.0, 0.0};
  const double now[3] = {roll_deg, pitch_deg, yaw_deg};
  if (started_) {
    for (int a = 0; a < 3; ++a) rates[a] = (now[a] - prev_[a]) / dt_ * kRadPerDeg;
  }
  started_ = true;
  for (int a = 0; a < 3; ++a) prev_[a] = now[a];

  const Vec3 body = euler_rates_to_body(roll_deg, pitch_deg, rates[0], rates[1], rates[2]);
  const Vec3 g = gravity_in_body(roll_deg, pitch_deg);
  ImuSample s;
  s.timestamp = t;
  for (int a = 0; a < 3; ++a) {
    s.gyro[a] = body[a] + bias_[a] + (noise_.gyro_sigma > 0.0 ? noise_.gyro_sigma * unit_(rng_) : 0.0);
    s.accel[a] = g[a] + (noise_.accel_sigma > 0.0 ? noise_.accel_sigma * unit_(rng_) : 0.0);
  }
  return s;
}

std::vector<ImuSample> synth_imu(const SynthTrajectory& traj, double dt, const ImuNoise& noise, std::uint64_t seed) {
  ImuSimulator imu(dt, noise, seed);
  std::vector<ImuSample> out;
  out.reserve(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) out.push_back(imu.sample(traj.time[k], traj.roll[k], traj.pitch[k], traj.yaw[k]));
  return out;
}

std::vector<ImuSample> synth_imu(const SynthTrajectory& traj, double dt) {
  return synth_imu(traj, dt, ImuNoise{0.0, 0.0, 0.0}, 0);
}

}  // namespace neuroflap::expert
