#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenefuse/completion.hpp"
#include "scenefuse/pgo.hpp"
#include "scenefuse/protocol.hpp"
#include "scenefuse/scene_graph.hpp"

namespace scenefuse {

/// What one sensor learns about one target in a fusion cycle.
struct TargetEstimate {
  NodeId target;
  /// Pose of the target in the sensor frame. Optimised (A_i^-1 P_j) when the
  /// solve covers both nodes, otherwise the completion chain.
  std::optional<Pose> pose;
  bool direct = false;
  bool lose_track = true;
  Vector6d uncertainty = Vector6d::Zero();
  std::vector<std::string> path;
  /// Newest timestamp among the edges supporting the estimate.
  TimestampUs newest_edge_us = 0;

  protocol::PoseEntry to_entry() const;
};

struct CycleResult {
  TimestampUs solve_t_us = 0;
  std::shared_ptr<const GraphSnapshot> snapshot;
  std::optional<pgo::SolveReport> report;
  std::string solve_error;
  std::map<NodeId, std::vector<TargetEstimate>> estimates;

  protocol::PoseUpdate update_for(const NodeId& sensor) const;
};

enum class IngestOutcome { Stored, Stale };

/// Converts a MEASUREMENT into an inter-layer edge and upserts it. The
/// weight is the message's info_diag when present, else `default_info`.
/// Registers an unknown target when `auto_register` is set; otherwise throws
/// UnknownTarget. Older-than-stored measurements are reported as Stale and
/// leave the graph untouched.
IngestOutcome ingest_measurement(DynamicSceneGraph& graph, const protocol::Measurement& m,
                                 const InfoMatrix& default_info, bool auto_register);

/// Resolves one (sensor, target) pair from a search graph and an optional
/// solve report.
TargetEstimate estimate_target(const completion::SearchGraph& graph, const pgo::SolveReport* report,
                               const NodeId& sensor, const NodeId& target);

/// One fusion cycle: pick the gauge anchor, solve, then run completion for
/// every requested sensor. Keeps the anchor across cycles while it stays
/// eligible.
class FusionEngine {
 public:
  explicit FusionEngine(pgo::SolveOptions opts = {}) : opts_(opts) {}

  /// `sensors` that are absent from the snapshot are skipped.
  CycleResult run_cycle(GraphSnapshot snap, const std::vector<NodeId>& sensors);

  /// Prefers `id` as anchor from now on. Throws UnknownNode if `id` is not
  /// an active node of `snap`, IneligibleAnchor if it has no usable edge.
  void force_anchor(const GraphSnapshot& snap, const NodeId& id);

  const std::optional<NodeId>& anchor() const { return anchor_; }

 private:
  pgo::SolveOptions opts_;
  std::optional<NodeId> anchor_;
  std::optional<NodeId> forced_;
};

}  // namespace scenefuse
