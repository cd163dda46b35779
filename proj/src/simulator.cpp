#include "scenefuse/simulator.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include "scenefuse/errors.hpp"
#include "scenefuse/rng.hpp"

namespace scenefuse::sim {
namespace {

constexpr double kSigmaFloor = 1e-6;

// Draw budget per (sensor, target, step): 12 for the noise normals, 1 for the
// occlusion uniform, padded so the layout can grow without reshuffling.
constexpr std::uint64_t kObserveStride = 16;
constexpr std::uint64_t kMotionStride = 6;

Eigen::Vector3d uniform_vec(CounterRng& rng, double limit) {
  return {rng.uniform(-limit, limit), rng.uniform(-limit, limit), rng.uniform(-limit, limit)};
}

Pose sensor_placement(int i, int n, double radius) {
  const double theta = 2.0 * std::numbers::pi * i / n;
  const Eigen::Vector3d pos(radius * std::cos(theta), radius * std::sin(theta), 0.0);
  // optical axis (z) through the centre, x horizontal
  const Eigen::Vector3d z = -pos.normalized();
  const Eigen::Vector3d x = Eigen::Vector3d::UnitZ().cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r << x, y, z;
  return Pose(Eigen::Quaterniond(r), pos);
}

Pose target_placement(CounterRng& rng, double cube) {
  const double h = 0.5 * cube;
  const Eigen::Vector3d pos = uniform_vec(rng, h);
  const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  return Pose(Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ())), pos);
}

std::vector<Pose> simulate(const MotionState& start, CounterRng rng, const AccelLimits& limits, const Tether& tether,
                           bool moving, std::size_t steps, double dt, std::vector<double>& speeds) {
  const Eigen::Vector3d home = start.pose.translation();
  std::vector<Pose> out;
  out.reserve(steps + 1);
  speeds.assign(1, start.linear_vel.norm());
  out.push_back(start.pose);
  MotionState s = start;
  for (std::size_t k = 0; k < steps; ++k) {
    if (moving) {
      rng.seek(k * kMotionStride);
      const Eigen::Vector3d a = uniform_vec(rng, limits.linear) - tether.stiffness * (s.pose.translation() - home) -
                                tether.damping * s.linear_vel;
      const Eigen::Vector3d alpha = uniform_vec(rng, limits.angular) - tether.damping * s.angular_vel;
      s = integrate(s, a, alpha, dt);
    }
    out.push_back(s.pose);
    speeds.push_back(s.linear_vel.norm());
  }
  return out;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (!(duration_s >= 0.0)) throw ConfigError("duration_s must be >= 0");
  if (!(rate_hz > 0.0)) throw ConfigError("rate_hz must be > 0");
  if (n_sensors < 1 || n_targets < 1) throw ConfigError("n_sensors and n_targets must be >= 1");
  if (!(p_block >= 0.0 && p_block <= 1.0)) throw ConfigError("p_block must lie in [0, 1]");
  if (!(accel.linear >= 0.0 && accel.angular >= 0.0)) throw ConfigError("accel limits must be >= 0");
  auto check = [](const NoiseModel& n) {
    if (!(n.sigma_t >= 0.0 && n.sigma_r >= 0.0)) throw ConfigError("noise sigmas must be >= 0");
  };
  check(default_noise);
  for (const auto& n : noise) check(n);
  if (burst.enabled && !(burst.p_enter >= 0.0 && burst.p_enter <= 1.0 && burst.p_exit >= 0.0 && burst.p_exit <= 1.0)) {
    throw ConfigError("burst probabilities must lie in [0, 1]");
  }
  if (!(tether.stiffness >= 0.0 && tether.damping >= 0.0)) throw ConfigError("tether gains must be >= 0");
  if (!(sensor_radius > 0.0) || !(target_cube >= 0.0)) throw ConfigError("placement sizes must be positive");
}

const NoiseModel& ScenarioConfig::noise_for(int sensor) const {
  if (sensor >= 0 && static_cast<std::size_t>(sensor) < noise.size()) return noise[sensor];
  return default_noise;
}

std::size_t ScenarioConfig::steps() const {
  return static_cast<std::size_t>(std::llround(duration_s * rate_hz));
}

MotionState integrate(const MotionState& s, const Eigen::Vector3d& linear_acc, const Eigen::Vector3d& angular_acc,
                      double dt) {
  MotionState n;
  n.linear_vel = s.linear_vel + linear_acc * dt;
  n.angular_vel = s.angular_vel + angular_acc * dt;
  const Eigen::Vector3d t = s.pose.translation() + 0.5 * (s.linear_vel + n.linear_vel) * dt;
  const Eigen::Vector3d dphi = 0.5 * (s.angular_vel + n.angular_vel) * dt;
  Eigen::Quaterniond q = s.pose.rotation() * se3::exp(Twist{Eigen::Vector3d::Zero(), dphi}).rotation();
  q.normalize();
  n.pose = Pose(q, t);
  return n;
}

double GroundTruthLog::path_length(const std::string& entity) const {
  auto it = poses.find(entity);
  if (it == poses.end()) throw UnknownTarget("no ground truth for " + entity);
  double len = 0.0;
  auto sp = speeds.find(entity);
  if (sp != speeds.end() && sp->second.size() == times.size() && times.size() == it->second.size()) {
    const auto& v = sp->second;
    for (std::size_t k = 1; k < v.size(); ++k) {
      len += 0.5 * (v[k] + v[k - 1]) * static_cast<double>(times[k] - times[k - 1]) * 1e-6;
    }
    return len;
  }
  for (std::size_t k = 1; k < it->second.size(); ++k) {
    len += (it->second[k].translation() - it->second[k - 1].translation()).norm();
  }
  return len;
}

GroundTruthLog generate(const ScenarioConfig& config) {
  config.validate();
  GroundTruthLog gt;
  const std::size_t steps = config.steps();
  const double dt = 1.0 / config.rate_hz;
  gt.times.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    gt.times.push_back(std::llround(static_cast<double>(k) * 1e6 / config.rate_hz));
  }

  for (int i = 0; i < config.n_sensors; ++i) {
    const std::string name = config.sensor_name(i);
    gt.sensors.push_back(name);
    MotionState start;
    start.pose = sensor_placement(i, config.n_sensors, config.sensor_radius);
    gt.poses[name] = simulate(start, CounterRng(config.seed, stream_id("motion/" + name)), config.accel,
                              config.tether, !config.sensors_static, steps, dt, gt.speeds[name]);
  }
  for (int j = 0; j < config.n_targets; ++j) {
    const std::string name = config.target_name(j);
    gt.targets.push_back(name);
    CounterRng placement(config.seed, stream_id("placement/" + name));
    MotionState start;
    start.pose = target_placement(placement, config.target_cube);
    gt.poses[name] = simulate(start, CounterRng(config.seed, stream_id("motion/" + name)), config.accel,
                              config.tether, true, steps, dt, gt.speeds[name]);
  }
  return gt;
}

MeasurementLog observe(const GroundTruthLog& gt, const ScenarioConfig& config) {
  config.validate();
  MeasurementLog log;
  log.reserve(gt.times.size() * gt.sensors.size() * gt.targets.size());

  struct Channel {
    const std::vector<Pose>* sensor;
    const std::vector<Pose>* target;
    std::string sensor_name, target_name;
    NoiseModel noise;
    CounterRng rng;
    bool blocked = false;
  };
  std::vector<Channel> channels;
  for (std::size_t i = 0; i < gt.sensors.size(); ++i) {
    for (const auto& target : gt.targets) {
      const std::string& sensor = gt.sensors[i];
      channels.push_back({&gt.poses.at(sensor), &gt.poses.at(target), sensor, target,
                          config.noise_for(static_cast<int>(i)),
                          CounterRng(config.seed, stream_id("observe/" + sensor + "/" + target))});
    }
  }

  for (std::size_t k = 0; k < gt.times.size(); ++k) {
    for (auto& c : channels) {
      c.rng.seek(k * kObserveStride);
      protocol::Measurement m;
      m.sensor_id = c.sensor_name;
      m.target = c.target_name;
      m.t_us = gt.times[k];
      m.pose = se3::relative((*c.sensor)[k], (*c.target)[k]);

      Eigen::Vector3d nt, nr;
      for (int a = 0; a < 3; ++a) nt[a] = c.rng.normal();
      for (int a = 0; a < 3; ++a) nr[a] = c.rng.normal();
      if (c.noise.sigma_t > 0.0 || c.noise.sigma_r > 0.0) {
        m.pose = m.pose * se3::exp(Twist{c.noise.sigma_t * nt, c.noise.sigma_r * nr});
      }

      const double u = c.rng.uniform();
      if (config.burst.enabled) {
        c.blocked = c.blocked ? !(u < config.burst.p_exit) : (u < config.burst.p_enter);
      } else {
        c.blocked = u < config.p_block;
      }
      m.status = !c.blocked;

      const double st = std::max(c.noise.sigma_t, kSigmaFloor);
      const double sr = std::max(c.noise.sigma_r, kSigmaFloor);
      Vector6d info;
      info << Eigen::Vector3d::Constant(1.0 / (st * st)), Eigen::Vector3d::Constant(1.0 / (sr * sr));
      m.info_diag = info;
      log.push_back(std::move(m));
    }
  }
  return log;
}

double calibrate_linear_accel(ScenarioConfig config, double target_length, double rel_tol) {
  if (!(target_length > 0.0)) throw ConfigError("target path length must be positive");
  auto mean_length = [&](double accel) {
    config.accel.linear = accel;
    const GroundTruthLog gt = generate(config);
    double sum = 0.0;
    for (const auto& t : gt.targets) sum += gt.path_length(t);
    return sum / static_cast<double>(gt.targets.size());
  };
  double lo = 0.0;
  double hi = std::max(config.accel.linear, 1e-3);
  while (mean_length(hi) < target_length) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw ConfigError("cannot reach the requested path length");
  }
  double mid = hi;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double len = mean_length(mid);
    if (std::abs(len - target_length) <= rel_tol * target_length) break;
    (len < target_length ? lo : hi) = mid;
  }
  return mid;
}

void write_ground_truth(std::ostream& out, const GroundTruthLog& gt) {
  for (std::size_t k = 0; k < gt.times.size(); ++k) {
    auto emit = [&](const std::string& name, const char* layer) {
      protocol::json j{{"t_us", gt.times[k]},
                       {"entity", name},
                       {"layer", layer},
                       {"pose", protocol::pose_to_json(gt.poses.at(name)[k])}};
      out << j.dump() << '\n';
    };
    for (const auto& s : gt.sensors) emit(s, "active");
    for (const auto& t : gt.targets) emit(t, "passive");
  }
}

GroundTruthLog read_ground_truth(std::istream& in) {
  GroundTruthLog gt;
  std::map<std::string, std::vector<TimestampUs>> times;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = protocol::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("t_us") || !j.contains("entity") || !j.contains("pose")) {
      throw ProtocolError("ground truth line " + std::to_string(lineno) + " is malformed");
    }
    const std::string entity = j.at("entity").get<std::string>();
    if (!gt.poses.contains(entity)) {
      const bool active = j.value("layer", std::string("passive")) == "active";
      (active ? gt.sensors : gt.targets).push_back(entity);
    }
    gt.poses[entity].push_back(protocol::pose_from_json(j.at("pose")));
    times[entity].push_back(j.at("t_us").get<TimestampUs>());
  }
  if (!times.empty()) {
    gt.times = times.begin()->second;
    for (const auto& [name, t] : times) {
      if (t != gt.times) throw ProtocolError("ground truth entities are not sampled on a shared clock");
    }
  }
  return gt;
}

void write_measurements(std::ostream& out, const MeasurementLog& log) {
  for (const auto& m : log) out << protocol::measurement_to_json(m).dump() << '\n';
}

MeasurementLog read_measurements(std::istream& in) {
  MeasurementLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = protocol::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ProtocolError("measurement line " + std::to_string(lineno) + " is not valid JSON");
    }
    log.push_back(protocol::measurement_from_json(j));
  }
  return log;
}

}  // namespace scenefuse::sim
