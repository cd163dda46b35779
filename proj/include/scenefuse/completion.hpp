#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scenefuse/pgo.hpp"
#include "scenefuse/scene_graph.hpp"

namespace scenefuse::completion {

enum class LinkKind { Inter, Intra };

/// One traversed link. `pose` is the pose of `to` in the frame of `from`,
/// i.e. already inverted when the link is walked against its stored
/// direction.
struct PathEdge {
  LinkKind kind = LinkKind::Inter;
  NodeId from;
  NodeId to;
  Pose pose;
  TimestampUs t_us = 0;
  bool reversed = false;
};

struct KinematicPath {
  std::vector<PathEdge> edges;
  /// Oldest timestamp along the path.
  TimestampUs freshness = 0;

  std::vector<NodeId> nodes() const;
  /// Composition of the edge poses, first to last.
  Pose compose() const;
  /// Empty when the path is well formed for (sensor, target).
  std::vector<std::string> violations(const NodeId& sensor, const NodeId& target) const;
};

struct Completion {
  Pose pose;
  bool direct = false;
  KinematicPath path;
};

/// Traversable links derived from a snapshot: tracked inter-layer edges in
/// both directions and one intra-layer link per passive pair. The intra link
/// carries the optimised relative pose when `report` covers both endpoints,
/// otherwise the freshest parallel estimate.
class SearchGraph {
 public:
  explicit SearchGraph(const GraphSnapshot& snap, const pgo::SolveReport* report = nullptr);

  const std::vector<PathEdge>& links(const NodeId& from) const;
  const GraphSnapshot& snapshot() const { return *snap_; }

 private:
  const GraphSnapshot* snap_;
  std::map<NodeId, std::vector<PathEdge>> adjacency_;
};

/// Ordering used to pick among candidate paths: fewer edges, then fresher
/// (larger min-timestamp), then lexicographically smaller node sequence.
bool better_path(const KinematicPath& a, const KinematicPath& b);

/// Kinematic completion for one (sensor, target) pair. Returns the
/// tracked direct edge when there is one, else the best simple path found
/// by depth-limited DFS. Throws UnknownNode or NoPath.
Completion query_pose(const SearchGraph& graph, const NodeId& sensor, const NodeId& target);
Completion query_pose(const GraphSnapshot& snap, const NodeId& sensor, const NodeId& target,
                      const pgo::SolveReport* report = nullptr);

/// query_pose for every passive node; std::nullopt marks NoPath.
std::map<NodeId, std::optional<Completion>> complete_all(const SearchGraph& graph, const NodeId& sensor);
std::map<NodeId, std::optional<Completion>> complete_all(const GraphSnapshot& snap, const NodeId& sensor,
                                                         const pgo::SolveReport* report = nullptr);

}  // namespace scenefuse::completion
