#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "scenefuse/protocol.hpp"
#include "scenefuse/se3.hpp"

namespace scenefuse::sim {

struct AccelLimits {
  double linear = 0.06;   // m/s^2, per axis
  double angular = 0.02;  // rad/s^2, per axis
};

/// Spring-damper pulling every entity back toward its starting position, so
/// that random accelerations produce bounded desk-scale motion. Zero
/// stiffness and damping give a free random walk.
struct Tether {
  double stiffness = 0.09;  // 1/s^2, on position
  double damping = 0.3;     // 1/s, on linear and angular velocity
};

struct NoiseModel {
  double sigma_t = 1e-3;                // m
  double sigma_r = 0.1 * 0.0174532925;  // rad
};

/// Optional Markov occlusion bursts; replaces the i.i.d. draw when enabled.
struct BurstModel {
  bool enabled = false;
  double p_enter = 0.05;
  double p_exit = 0.5;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration_s = 10.0;
  double rate_hz = 30.0;
  int n_sensors = 2;
  int n_targets = 2;
  double p_block = 0.1;
  AccelLimits accel;
  Tether tether;
  /// Per-sensor noise; sensors beyond the list use `default_noise`.
  std::vector<NoiseModel> noise;
  NoiseModel default_noise;
  bool sensors_static = false;
  BurstModel burst;
  double sensor_radius = 2.0;  // sensors on a circle facing its centre
  double target_cube = 0.5;    // targets start inside this cube at the centre
  std::string sensor_type = "sim";

  /// Throws ConfigError.
  void validate() const;
  std::string sensor_name(int i) const { return "sensor-" + std::to_string(i + 1); }
  std::string target_name(int j) const { return "target-" + std::to_string(j + 1); }
  const NoiseModel& noise_for(int sensor) const;
  std::size_t steps() const;
};

struct MotionState {
  Pose pose;
  Eigen::Vector3d linear_vel = Eigen::Vector3d::Zero();   // world frame
  Eigen::Vector3d angular_vel = Eigen::Vector3d::Zero();  // body frame
};

/// Advances one step: velocities integrate the accelerations, the pose
/// integrates the mean velocity (rotation right-multiplied, body frame).
MotionState integrate(const MotionState& s, const Eigen::Vector3d& linear_acc, const Eigen::Vector3d& angular_acc,
                      double dt);

/// Poses of every sensor and target sampled on a shared clock.
struct GroundTruthLog {
  std::vector<TimestampUs> times;
  std::vector<std::string> sensors;
  std::vector<std::string> targets;
  std::map<std::string, std::vector<Pose>> poses;
  /// |linear velocity| at each sample; empty when read back from a file.
  std::map<std::string, std::vector<double>> speeds;

  /// Distance travelled: speed integrated over time (trapezoid rule), or
  /// the sum of straight segments between samples when no speeds are known.
  /// Chords undercut the integral slightly since the velocity turns a little
  /// every step.
  double path_length(const std::string& entity) const;
};

using MeasurementLog = std::vector<protocol::Measurement>;

GroundTruthLog generate(const ScenarioConfig& config);

/// Synthesises T_ij = A_i^-1 P_j exp(noise) for every sensor, target and
/// sample, flagging occluded samples with status=false.
MeasurementLog observe(const GroundTruthLog& gt, const ScenarioConfig& config);

/// Bisection on the linear acceleration limit so that the mean target path
/// length matches `target_length` within `rel_tol`. Returns the limit.
double calibrate_linear_accel(ScenarioConfig config, double target_length, double rel_tol = 1e-3);

/// {"t_us", "entity", "layer", "pose"} per line.
void write_ground_truth(std::ostream& out, const GroundTruthLog& gt);
GroundTruthLog read_ground_truth(std::istream& in);
/// MEASUREMENT wire records, one per line.
void write_measurements(std::ostream& out, const MeasurementLog& log);
MeasurementLog read_measurements(std::istream& in);

}  // namespace scenefuse::sim
