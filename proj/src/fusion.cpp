#include "scenefuse/fusion.hpp"

#include <algorithm>

#include "scenefuse/errors.hpp"

namespace scenefuse {

protocol::PoseEntry TargetEstimate::to_entry() const {
  return {target.name, pose, direct, uncertainty, lose_track};
}

protocol::PoseUpdate CycleResult::update_for(const NodeId& sensor) const {
  protocol::PoseUpdate update;
  update.solve_t_us = solve_t_us;
  if (auto it = estimates.find(sensor); it != estimates.end()) {
    for (const auto& e : it->second) update.poses.push_back(e.to_entry());
  }
  return update;
}

IngestOutcome ingest_measurement(DynamicSceneGraph& graph, const protocol::Measurement& m,
                                 const InfoMatrix& default_info, bool auto_register) {
  const NodeId sensor = NodeId::active(m.sensor_id);
  const NodeId target = NodeId::passive(m.target);
  if (!graph.has_node(target)) {
    if (!auto_register) throw UnknownTarget("target not registered: " + m.target);
    graph.add_node(target);
  }
  InterEdge e;
  e.sensor = sensor;
  e.target = target;
  e.pose = m.pose;
  e.t_us = m.t_us;
  e.status = m.status;
  e.info = m.info_diag ? info_from_diagonal(*m.info_diag) : default_info;
  try {
    graph.upsert_measurement(std::move(e));
  } catch (const StaleTimestamp&) {
    return IngestOutcome::Stale;
  }
  return IngestOutcome::Stored;
}

TargetEstimate estimate_target(const completion::SearchGraph& graph, const pgo::SolveReport* report,
                               const NodeId& sensor, const NodeId& target) {
  TargetEstimate est;
  est.target = target;
  std::optional<completion::Completion> found;
  try {
    found = completion::query_pose(graph, sensor, target);
  } catch (const NoPath&) {
    return est;
  }
  est.lose_track = false;
  est.direct = found->direct;
  est.pose = found->pose;
  for (const auto& node : found->path.nodes()) est.path.push_back(node.name);
  for (const auto& e : found->path.edges) est.newest_edge_us = std::max(est.newest_edge_us, e.t_us);

  if (report && report->state.contains(sensor) && report->state.contains(target)) {
    est.pose = se3::relative(report->state.pose(sensor), report->state.pose(target));
  }
  if (report) {
    if (auto it = report->uncertainties.find(target); it != report->uncertainties.end()) {
      est.uncertainty = it->second;
    }
  }
  return est;
}

CycleResult FusionEngine::run_cycle(GraphSnapshot snap, const std::vector<NodeId>& sensors) {
  CycleResult result;
  result.solve_t_us = snap.taken_at_us;
  auto shared = std::make_shared<const GraphSnapshot>(std::move(snap));
  result.snapshot = shared;
  const GraphSnapshot& s = *shared;

  std::optional<NodeId> preferred = anchor_;
  if (forced_ && pgo::anchor_eligible(s, *forced_)) preferred = forced_;
  anchor_ = pgo::select_anchor(s, preferred);
  if (anchor_) {
    try {
      pgo::StateVector init;
      init.anchor = *anchor_;
      result.report = pgo::solve(s, init, opts_);
    } catch (const Error& e) {
      result.solve_error = e.what();
    }
  }

  const completion::SearchGraph graph(s, result.report ? &*result.report : nullptr);
  const pgo::SolveReport* report = result.report ? &*result.report : nullptr;
  for (const NodeId& sensor : sensors) {
    if (!s.active.contains(sensor)) continue;
    auto& out = result.estimates[sensor];
    for (const NodeId& target : s.passive) out.push_back(estimate_target(graph, report, sensor, target));
  }
  return result;
}

void FusionEngine::force_anchor(const GraphSnapshot& snap, const NodeId& id) {
  if (!id.is_active() || !snap.active.contains(id)) throw UnknownNode("no such sensor: " + id.name);
  if (!pgo::anchor_eligible(snap, id)) throw IneligibleAnchor(id.name + " has no usable edge");
  forced_ = id;
}

}  // namespace scenefuse
