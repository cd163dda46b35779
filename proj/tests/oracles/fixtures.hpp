#pragma once

#include <map>
#include <random>
#include <vector>

#include "scenefuse/scene_graph.hpp"
#include "scenefuse/se3.hpp"

// Random poses and synthetic graphs for tests.
namespace scenefuse::fixture {

using Rng = std::mt19937_64;

/// Uniform axis, angle uniform in [0, max_angle], translation uniform in the
/// cube [-trans, trans]^3.
Pose random_pose(Rng& rng, double trans = 1.0, double max_angle = 3.0);
Twist random_twist(Rng& rng, double max_norm);

/// Ground-truth poses of every node in one world frame.
struct World {
  std::map<NodeId, Pose> poses;

  std::vector<NodeId> active() const;
  std::vector<NodeId> passive() const;
  /// T = A^-1 P
  Pose measurement(const NodeId& sensor, const NodeId& target) const;
  /// Every pose left-multiplied by `g`.
  World transformed(const Pose& g) const;
};

/// Sensors "s1".."sN", targets "t1".."tM".
World random_world(Rng& rng, int n_active, int n_passive, double trans = 1.0);

struct EdgeSpec {
  NodeId sensor;
  NodeId target;
  bool status = true;
  TimestampUs t_us = 0;
};

/// Every (sensor, target) pair, tracked, at `t_us`.
std::vector<EdgeSpec> full_edges(const World& world, TimestampUs t_us = 0);

struct NoiseSpec {
  double sigma_t = 0.0;
  double sigma_r = 0.0;
};

/// Builds a snapshot taken at the newest edge time with measurements
/// synthesised from `world`, optionally perturbed by right-multiplied
/// Gaussian noise. Weights are diag(1/sigma^2) (identity when noiseless).
GraphSnapshot make_snapshot(const World& world, const std::vector<EdgeSpec>& edges, NoiseSpec noise = {},
                            Rng* rng = nullptr, GraphConfig config = {});

}  // namespace scenefuse::fixture
