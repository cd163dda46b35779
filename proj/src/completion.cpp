#include "scenefuse/completion.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "scenefuse/errors.hpp"

namespace scenefuse::completion {

std::vector<NodeId> KinematicPath::nodes() const {
  std::vector<NodeId> out;
  if (edges.empty()) return out;
  out.push_back(edges.front().from);
  for (const PathEdge& e : edges) out.push_back(e.to);
  return out;
}

Pose KinematicPath::compose() const {
  Pose out;
  for (const PathEdge& e : edges) out = out * e.pose;
  return out;
}

std::vector<std::string> KinematicPath::violations(const NodeId& sensor, const NodeId& target) const {
  std::vector<std::string> bad;
  if (edges.empty()) {
    bad.push_back("empty path");
    return bad;
  }
  if (edges.front().from != sensor) bad.push_back("path does not start at the requesting sensor");
  if (edges.back().to != target) bad.push_back("path does not end at the target");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i - 1].to != edges[i].from) bad.push_back("consecutive edges do not share a node");
  }
  const auto ns = nodes();
  if (std::set<NodeId>(ns.begin(), ns.end()).size() != ns.size()) bad.push_back("node repeated");
  TimestampUs oldest = std::numeric_limits<TimestampUs>::max();
  for (const PathEdge& e : edges) {
    oldest = std::min(oldest, e.t_us);
    const bool intra = !e.from.is_active() && !e.to.is_active();
    if (intra != (e.kind == LinkKind::Intra)) bad.push_back("link kind does not match its endpoints");
    if (!intra && e.from.is_active() == e.to.is_active()) bad.push_back("active-active link");
  }
  if (oldest != freshness) bad.push_back("freshness is not the oldest edge timestamp");
  return bad;
}

SearchGraph::SearchGraph(const GraphSnapshot& snap, const pgo::SolveReport* report) : snap_(&snap) {
  for (const auto& [key, e] : snap.edges) {
    if (!e.status) continue;
    adjacency_[e.sensor].push_back({LinkKind::Inter, e.sensor, e.target, e.pose, e.t_us, false});
    adjacency_[e.target].push_back({LinkKind::Inter, e.target, e.sensor, e.pose.inverse(), e.t_us, true});
  }
  for (const IntraEdgeSet& set : derive_intra_edges(snap)) {
    const IntraEstimate& best = set.freshest();
    Pose rel = best.pose;
    if (report && report->state.passive.contains(set.first) && report->state.passive.contains(set.second)) {
      rel = se3::relative(report->state.passive.at(set.first), report->state.passive.at(set.second));
    }
    adjacency_[set.first].push_back({LinkKind::Intra, set.first, set.second, rel, best.t_us, false});
    adjacency_[set.second].push_back({LinkKind::Intra, set.second, set.first, rel.inverse(), best.t_us, true});
  }
  for (auto& [node, links] : adjacency_) {
    std::sort(links.begin(), links.end(), [](const PathEdge& a, const PathEdge& b) { return a.to < b.to; });
  }
}

const std::vector<PathEdge>& SearchGraph::links(const NodeId& from) const {
  static const std::vector<PathEdge> kNone;
  auto it = adjacency_.find(from);
  return it == adjacency_.end() ? kNone : it->second;
}

bool better_path(const KinematicPath& a, const KinematicPath& b) {
  if (a.edges.size() != b.edges.size()) return a.edges.size() < b.edges.size();
  if (a.freshness != b.freshness) return a.freshness > b.freshness;
  return a.nodes() < b.nodes();
}

namespace {

// Depth-limited DFS collecting the best simple path of exactly `limit`
// edges. Shorter paths were ruled out by earlier limits.
class PathSearch {
 public:
  PathSearch(const SearchGraph& graph, const NodeId& target) : graph_(graph), target_(target) {}

  std::optional<KinematicPath> run(const NodeId& sensor, std::size_t max_edges) {
    for (std::size_t limit = 1; limit <= max_edges; ++limit) {
      limit_ = limit;
      visited_ = {sensor};
      stack_.clear();
      best_.reset();
      explored_deeper_ = false;
      dfs(sensor, std::numeric_limits<TimestampUs>::max());
      if (best_) return best_;
      if (!explored_deeper_) break;  // no path of this length could be extended
    }
    return std::nullopt;
  }

 private:
  void dfs(const NodeId& node, TimestampUs oldest) {
    if (stack_.size() == limit_) {
      if (node == target_) offer(oldest);
      else explored_deeper_ = true;
      return;
    }
    for (const PathEdge& link : graph_.links(node)) {
      if (visited_.contains(link.to)) continue;
      // The target may only appear as the final node.
      if (link.to == target_ && stack_.size() + 1 != limit_) continue;
      visited_.insert(link.to);
      stack_.push_back(link);
      dfs(link.to, std::min(oldest, link.t_us));
      stack_.pop_back();
      visited_.erase(link.to);
    }
  }

  void offer(TimestampUs oldest) {
    KinematicPath candidate{stack_, oldest};
    if (!best_ || better_path(candidate, *best_)) best_ = std::move(candidate);
  }

  const SearchGraph& graph_;
  NodeId target_;
  std::size_t limit_ = 0;
  std::set<NodeId> visited_;
  std::vector<PathEdge> stack_;
  std::optional<KinematicPath> best_;
  bool explored_deeper_ = false;
};

}  // namespace

Completion query_pose(const SearchGraph& graph, const NodeId& sensor, const NodeId& target) {
  const GraphSnapshot& snap = graph.snapshot();
  if (!sensor.is_active() || !snap.active.contains(sensor)) throw UnknownNode("unknown sensor " + sensor.str());
  if (target.is_active() || !snap.passive.contains(target)) throw UnknownNode("unknown target " + target.str());

  if (const InterEdge* e = snap.edge(sensor, target); e && e->status) {
    KinematicPath path{{{LinkKind::Inter, sensor, target, e->pose, e->t_us, false}}, e->t_us};
    return {e->pose, true, std::move(path)};
  }

  const std::size_t max_edges = snap.active.size() + snap.passive.size() - 1;
  PathSearch search(graph, target);
  auto path = search.run(sensor, max_edges);
  if (!path) throw NoPath("no tracked chain from " + sensor.name + " to " + target.name);
  const Pose pose = path->compose();
  return {pose, false, std::move(*path)};
}

Completion query_pose(const GraphSnapshot& snap, const NodeId& sensor, const NodeId& target,
                      const pgo::SolveReport* report) {
  return query_pose(SearchGraph(snap, report), sensor, target);
}

std::map<NodeId, std::optional<Completion>> complete_all(const SearchGraph& graph, const NodeId& sensor) {
  const GraphSnapshot& snap = graph.snapshot();
  if (!sensor.is_active() || !snap.active.contains(sensor)) throw UnknownNode("unknown sensor " + sensor.str());
  std::map<NodeId, std::optional<Completion>> out;
  for (const NodeId& target : snap.passive) {
    try {
      out[target] = query_pose(graph, sensor, target);
    } catch (const NoPath&) {
      out[target] = std::nullopt;
    }
  }
  return out;
}

std::map<NodeId, std::optional<Completion>> complete_all(const GraphSnapshot& snap, const NodeId& sensor,
                                                         const pgo::SolveReport* report) {
  return complete_all(SearchGraph(snap, report), sensor);
}

}  // namespace scenefuse::completion
