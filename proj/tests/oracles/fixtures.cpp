#include "fixtures.hpp"

#include <algorithm>
#include <cmath>

namespace scenefuse::fixture {

Pose random_pose(Rng& rng, double trans, double max_angle) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> angle(0.0, max_angle);
  std::uniform_real_distribution<double> t(-trans, trans);
  Eigen::Vector3d axis(n01(rng), n01(rng), n01(rng));
  axis.normalize();
  const double a = angle(rng);
  const Eigen::Vector3d tr(t(rng), t(rng), t(rng));
  return Pose(Eigen::Quaterniond(Eigen::AngleAxisd(a, axis)), tr);
}

Twist random_twist(Rng& rng, double max_norm) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> len(0.0, max_norm);
  Vector6d v;
  for (int k = 0; k < 6; ++k) v[k] = n01(rng);
  return Twist::from_vector(v.normalized() * len(rng));
}

std::vector<NodeId> World::active() const {
  std::vector<NodeId> out;
  for (const auto& [id, p] : poses) {
    if (id.is_active()) out.push_back(id);
  }
  return out;
}

std::vector<NodeId> World::passive() const {
  std::vector<NodeId> out;
  for (const auto& [id, p] : poses) {
    if (!id.is_active()) out.push_back(id);
  }
  return out;
}

Pose World::measurement(const NodeId& sensor, const NodeId& target) const {
  return poses.at(sensor).inverse() * poses.at(target);
}

World World::transformed(const Pose& g) const {
  World out;
  for (const auto& [id, p] : poses) out.poses[id] = g * p;
  return out;
}

World random_world(Rng& rng, int n_active, int n_passive, double trans) {
  World w;
  for (int i = 0; i < n_active; ++i) w.poses[NodeId::active("s" + std::to_string(i + 1))] = random_pose(rng, trans);
  for (int j = 0; j < n_passive; ++j) w.poses[NodeId::passive("t" + std::to_string(j + 1))] = random_pose(rng, trans);
  return w;
}

std::vector<EdgeSpec> full_edges(const World& world, TimestampUs t_us) {
  std::vector<EdgeSpec> out;
  for (const auto& s : world.active()) {
    for (const auto& t : world.passive()) out.push_back({s, t, true, t_us});
  }
  return out;
}

GraphSnapshot make_snapshot(const World& world, const std::vector<EdgeSpec>& edges, NoiseSpec noise, Rng* rng,
                            GraphConfig config) {
  DynamicSceneGraph graph(config);
  for (const auto& [id, p] : world.poses) graph.add_node(id);
  const bool noisy = rng && (noise.sigma_t > 0.0 || noise.sigma_r > 0.0);
  InfoMatrix info = InfoMatrix::Identity();
  if (noisy) {
    Vector6d d;
    const double st = std::max(noise.sigma_t, 1e-6), sr = std::max(noise.sigma_r, 1e-6);
    d << Eigen::Vector3d::Constant(1.0 / (st * st)), Eigen::Vector3d::Constant(1.0 / (sr * sr));
    info = info_from_diagonal(d);
  }
  TimestampUs newest = 0;
  std::normal_distribution<double> n01;
  for (const EdgeSpec& e : edges) {
    Pose m = world.measurement(e.sensor, e.target);
    if (noisy) {
      Vector6d xi;
      for (int k = 0; k < 3; ++k) xi[k] = noise.sigma_t * n01(*rng);
      for (int k = 3; k < 6; ++k) xi[k] = noise.sigma_r * n01(*rng);
      m = m * se3::exp(Twist::from_vector(xi));
    }
    graph.upsert_measurement({e.sensor, e.target, m, e.t_us, e.status, info});
    newest = std::max(newest, e.t_us);
  }
  return graph.snapshot(newest);
}

}  // namespace scenefuse::fixture
