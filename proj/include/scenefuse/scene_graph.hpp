#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scenefuse/se3.hpp"

namespace scenefuse {

/// Microseconds since the Unix epoch (or since scenario start for synthetic
/// logs). Supplied by the sender and trusted as-is.
using TimestampUs = std::int64_t;

enum class Layer { Active, Passive };

/// Graph node identity. Active nodes are sensors, passive nodes are the
/// rigid bodies they track. Names are unique within a layer.
struct NodeId {
  Layer layer = Layer::Passive;
  std::string name;

  NodeId() = default;
  NodeId(Layer l, std::string n);

  static NodeId active(std::string n) { return {Layer::Active, std::move(n)}; }
  static NodeId passive(std::string n) { return {Layer::Passive, std::move(n)}; }

  bool is_active() const { return layer == Layer::Active; }
  /// "active:<name>" or "passive:<name>"
  std::string str() const;

  auto operator<=>(const NodeId&) const = default;
};

/// Direct sensor -> target measurement: pose of `target` in the frame of
/// `sensor`. At most one per (sensor, target) pair.
struct InterEdge {
  NodeId sensor;
  NodeId target;
  Pose pose;
  TimestampUs t_us = 0;
  bool status = true;
  InfoMatrix info = InfoMatrix::Identity();

  /// Contributes to the optimisation: tracked and carrying information.
  bool usable() const { return status && !info.isZero(0.0); }
};

using EdgeKey = std::pair<NodeId, NodeId>;

struct IntraEstimate {
  NodeId via;
  /// Pose of `second` in the frame of `first`.
  Pose pose;
  TimestampUs t_us = 0;
};

/// Parallel relative-pose estimates between two passive nodes, one per
/// sensor that currently sees both. `first < second` always.
struct IntraEdgeSet {
  NodeId first;
  NodeId second;
  std::vector<IntraEstimate> estimates;

  /// Most recent estimate (lexicographically smallest `via` among equals).
  const IntraEstimate& freshest() const;
};

struct GraphConfig {
  TimestampUs stale_after_us = 500'000;
  /// Two measurements of one sensor are paired into an intra-layer estimate
  /// only when their timestamps differ by at most this much.
  TimestampUs sync_window_us = 500'000;
};

/// Immutable copy of the graph at one instant: every node plus the edges
/// not older than `taken_at_us - stale_after_us`.
struct GraphSnapshot {
  TimestampUs taken_at_us = 0;
  GraphConfig config;
  std::set<NodeId> active;
  std::set<NodeId> passive;
  std::map<EdgeKey, InterEdge> edges;

  bool contains(const NodeId& id) const;
  const InterEdge* edge(const NodeId& sensor, const NodeId& target) const;
  std::vector<const InterEdge*> edges_of(const NodeId& node) const;
  bool empty() const { return active.empty() && passive.empty(); }
};

/// Relative estimates for every passive pair that shares a tracking sensor
/// in `snap` (status=true edges only).
std::vector<IntraEdgeSet> derive_intra_edges(const GraphSnapshot& snap);

/// The two-layer scene graph. Not thread-safe: a single owner applies all
/// mutations and hands out snapshots to readers.
class DynamicSceneGraph {
 public:
  explicit DynamicSceneGraph(GraphConfig config = {}) : config_(config) {}

  const GraphConfig& config() const { return config_; }

  void add_node(const NodeId& id);
  /// Removes the node and every incident inter-layer edge.
  void remove_node(const NodeId& id);
  bool has_node(const NodeId& id) const;

  /// Replaces the single edge for (sensor, target). Throws UnknownNode if an
  /// endpoint is not registered, StaleTimestamp if older than the stored
  /// edge, InvalidInfoMatrix for a malformed weight. Info is zeroed when
  /// status is false.
  void upsert_measurement(InterEdge edge);

  std::vector<IntraEdgeSet> derive_intra_edges(TimestampUs now) const;
  GraphSnapshot snapshot(TimestampUs now) const;

  const std::set<NodeId>& active_nodes() const { return active_; }
  const std::set<NodeId>& passive_nodes() const { return passive_; }
  const std::map<EdgeKey, InterEdge>& edges() const { return edges_; }
  std::vector<InterEdge> edges_of(const NodeId& node) const;

  /// Type and graph invariants that must hold after every public operation.
  /// Returns a description of each violation; empty when consistent.
  std::vector<std::string> check_invariants() const;

 private:
  GraphConfig config_;
  std::set<NodeId> active_;
  std::set<NodeId> passive_;
  std::map<EdgeKey, InterEdge> edges_;
};

}  // namespace scenefuse
