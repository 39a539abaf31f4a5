#include "neuroflap/expert/flight_log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "neuroflap/error.hpp"

namespace neuroflap::expert {

const char* const kFlightLogColumns[18] = {
    "timestamp", "gyro_x", "gyro_y", "gyro_z", "accel_x",        "accel_y", "accel_z",     "theta_ref",   "psi_ref",
    "roll",      "pitch",  "pitch_filtered", "yaw", "yaw_rate", "o_theta", "o_psi", "pwm_L", "pwm_R"};

namespace {

/// Euler yaw rate (deg/s) from body rates and the current roll/pitch estimate.
double euler_yaw_rate(const Vec3& gyro, double roll_deg, double pitch_deg) {
  const double phi = roll_deg * kRadPerDeg;
  const double theta = pitch_deg * kRadPerDeg;
  const double c = std::max(std::cos(theta), 1e-3);
  return (gyro[1] * std::sin(phi) + gyro[2] * std::cos(phi)) / c * kDegPerRad;
}

void fill_yaw_rate(FlightLog& log, double dt) {
  if (log.size() < 2) return;
  std::vector<double> yaw(log.size());
  for (std::size_t k = 0; k < log.size(); ++k) yaw[k] = log[k].attitude.yaw;
  const auto rate = yaw_rate_target(yaw, dt * 1000.0);
  for (std::size_t k = 0; k < log.size(); ++k) log[k].attitude.yaw_rate = rate[k] * 1000.0;
}

}  // namespace

ExpertController::ExpertController(const ExpertConfig& config, const Vec3& gyro_bias)
    : config_(config), bias_(gyro_bias), madgwick_(config.madgwick_gain), rls_(config.rls_forgetting) {}

FlightRecord ExpertController::step(const ImuSample& imu, const ReferenceSample& ref) {
  FlightRecord rec;
  rec.imu = imu;
  rec.pitch_ref = ref.pitch;
  rec.yaw_ref = ref.yaw;

  const Vec3 gyro{imu.gyro[0] - bias_[0], imu.gyro[1] - bias_[1], imu.gyro[2] - bias_[2]};
  const auto est = madgwick_.update(gyro, imu.accel, config_.dt);
  rec.attitude.roll = est.roll;
  rec.attitude.pitch = est.pitch;
  rec.attitude.yaw = yaw_.update(euler_yaw_rate(gyro, est.roll, est.pitch), config_.dt);

  rec.pitch_filtered = rls_.update(est.pitch);
  const double e_pitch = rec.pitch_ref - rec.pitch_filtered;
  const double e_yaw = wrap_angle(rec.yaw_ref - rec.attitude.yaw);
  rec.pitch_offset = pid_step(config_.pitch_gains, pitch_pid_, e_pitch, config_.dt, config_.offset_limit_deg);
  rec.yaw_offset = pid_step(config_.yaw_gains, yaw_pid_, e_yaw, config_.dt, config_.offset_limit_deg);

  const auto wings = offsets_to_wing_commands(rec.pitch_offset, rec.yaw_offset);
  const double t = static_cast<double>(tick_++) * config_.dt;
  rec.pwm_left = angle_to_pwm(cpg_step(config_.cpg, t, wings.left), config_.servo);
  rec.pwm_right = angle_to_pwm(cpg_step(config_.cpg, t, wings.right), config_.servo);
  return rec;
}

FlightLog generate_expert_labels(std::span<const ImuSample> imu, std::span<const ReferenceSample> refs,
                                 const ExpertConfig& config) {
  require(imu.size() == refs.size(), "generate_expert_labels: IMU and reference sequences must align");
  const std::size_t n = imu.size();
  FlightLog log;
  if (n == 0) return log;
  log.reserve(n);
  ExpertController expert(config, gyro_bias_calibrate(imu.first(std::min(config.bias_samples, n))));
  for (std::size_t k = 0; k < n; ++k) log.push_back(expert.step(imu[k], refs[k]));
  fill_yaw_rate(log, config.dt);
  return log;
}

FlightLog replay_expert(const FlightLog& log, const ExpertConfig& config) {
  std::vector<ImuSample> imu(log.size());
  std::vector<ReferenceSample> refs(log.size());
  for (std::size_t k = 0; k < log.size(); ++k) {
    imu[k] = log[k].imu;
    refs[k] = {log[k].pitch_ref, log[k].yaw_ref};
  }
  return generate_expert_labels(imu, refs, config);
}

Vec3 log_gyro_bias(const FlightLog& log, std::size_t bias_samples) {
  std::vector<ImuSample> head;
  const std::size_t n = std::min(bias_samples, log.size());
  head.reserve(n);
  for (std::size_t k = 0; k < n; ++k) head.push_back(log[k].imu);
  return gyro_bias_calibrate(head);
}

FlightLog synthesize_log(const LogSpec& spec, std::uint64_t seed, SynthTrajectory* truth) {
  const auto& cfg = spec.synth;
  auto expert_cfg = spec.expert;
  expert_cfg.dt = cfg.dt;
  const auto scenario = synth_scenario(cfg, seed);
  const std::size_t n = scenario.size();
  FlightLog log;
  if (n == 0) return log;

  BodyModel body(cfg, scenario);
  ImuSimulator sensor(cfg.dt, spec.noise, seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<ImuSample> imu;
  imu.reserve(n);
  double r, p, y;
  auto sense = [&](std::size_t k) {
    body.attitude(k, r, p, y);
    if (truth) truth->push_back(scenario.time[k], r, p, y);
    imu.push_back(sensor.sample(scenario.time[k], r, p, y));
  };

  // Uncontrolled until the bias window is complete, so the calibration does not depend on the controller.
  const std::size_t hold = std::min(n, std::max<std::size_t>(expert_cfg.bias_samples, 1));
  sense(0);
  for (std::size_t k = 0; k + 1 < hold; ++k) {
    body.advance(k, 0.0, 0.0);
    sense(k + 1);
  }
  ExpertController expert(expert_cfg, gyro_bias_calibrate(std::span<const ImuSample>(imu).first(hold)));
  log.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& rec = log.emplace_back(expert.step(imu[k], {scenario.pitch_ref[k], scenario.yaw_ref[k]}));
    if (k + 1 < n && k + 1 >= hold) {
      body.advance(k, rec.pitch_offset, rec.yaw_offset);
      sense(k + 1);
    }
  }
  fill_yaw_rate(log, expert_cfg.dt);
  return log;
}

// ---- CSV ----------------------------------------------------------------------

void write_flight_log(const FlightLog& log, std::ostream& out) {
  out << "# neuroflap flight log, one row per 10 ms tick\n";
  out << "# units: timestamp s; gyro rad/s (body, raw); accel m/s^2 (body); theta_ref, psi_ref, roll, pitch,\n";
  out << "#        pitch_filtered, yaw, o_theta, o_psi deg; yaw_rate deg/s; pwm_L, pwm_R us\n";
  for (std::size_t c = 0; c < 18; ++c) out << (c ? "," : "") << kFlightLogColumns[c];
  out << '\n';
  char buf[40];
  for (const auto& r : log) {
    const double row[18] = {r.imu.timestamp, r.imu.gyro[0],  r.imu.gyro[1],     r.imu.gyro[2],  r.imu.accel[0],
                            r.imu.accel[1],  r.imu.accel[2], r.pitch_ref,       r.yaw_ref,      r.attitude.roll,
                            r.attitude.pitch, r.pitch_filtered, r.attitude.yaw, r.attitude.yaw_rate,
                            r.pitch_offset,  r.yaw_offset,   r.pwm_left,        r.pwm_right};
    for (std::size_t c = 0; c < 18; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

FlightLog read_flight_log(std::istream& in) {
  FlightLog log;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      if (line.rfind("timestamp,", 0) != 0) throw ContractViolation("flight log: missing header row");
      continue;
    }
    double v[18];
    const char* p = line.c_str();
    for (std::size_t c = 0; c < 18; ++c) {
      char* end = nullptr;
      v[c] = std::strtod(p, &end);
      if (end == p) throw ContractViolation("flight log: malformed value on line " + std::to_string(line_no));
      p = end;
      if (c < 17) {
        if (*p != ',') throw ContractViolation("flight log: too few columns on line " + std::to_string(line_no));
        ++p;
      }
    }
    FlightRecord r;
    r.imu.timestamp = v[0];
    r.imu.gyro = {v[1], v[2], v[3]};
    r.imu.accel = {v[4], v[5], v[6]};
    r.pitch_ref = v[7];
    r.yaw_ref = v[8];
    r.attitude.roll = v[9];
    r.attitude.pitch = v[10];
    r.pitch_filtered = v[11];
    r.attitude.yaw = v[12];
    r.attitude.yaw_rate = v[13];
    r.pitch_offset = v[14];
    r.yaw_offset = v[15];
    r.pwm_left = v[16];
    r.pwm_right = v[17];
    log.push_back(r);
  }
  if (!header) throw ContractViolation("flight log: missing header row");
  return log;
}

void write_flight_log_file(const FlightLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_flight_log(log, out);
}

FlightLog read_flight_log_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_flight_log(in);
}

std::vector<std::filesystem::path> list_flight_logs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace neuroflap::expert
