#include "scenefuse/scene_graph.hpp"

#include <algorithm>
#include <cstdlib>

#include "scenefuse/errors.hpp"

namespace scenefuse {

NodeId::NodeId(Layer l, std::string n) : layer(l), name(std::move(n)) {
  if (name.empty()) throw std::invalid_argument("NodeId: name must not be empty");
}

std::string NodeId::str() const {
  return (layer == Layer::Active ? "active:" : "passive:") + name;
}

const IntraEstimate& IntraEdgeSet::freshest() const {
  // estimates are ordered by `via`, so the first maximum wins ties.
  return *std::max_element(estimates.begin(), estimates.end(),
                           [](const IntraEstimate& a, const IntraEstimate& b) { return a.t_us < b.t_us; });
}

bool GraphSnapshot::contains(const NodeId& id) const {
  return id.is_active() ? active.contains(id) : passive.contains(id);
}

const InterEdge* GraphSnapshot::edge(const NodeId& sensor, const NodeId& target) const {
  auto it = edges.find({sensor, target});
  return it == edges.end() ? nullptr : &it->second;
}

std::vector<const InterEdge*> GraphSnapshot::edges_of(const NodeId& node) const {
  std::vector<const InterEdge*> out;
  for (const auto& [key, e] : edges) {
    if (key.first == node || key.second == node) out.push_back(&e);
  }
  return out;
}

std::vector<IntraEdgeSet> derive_intra_edges(const GraphSnapshot& snap) {
  // Group valid edges by sensor; map order gives targets sorted by name.
  std::map<NodeId, std::vector<const InterEdge*>> by_sensor;
  for (const auto& [key, e] : snap.edges) {
    if (e.status) by_sensor[key.first].push_back(&e);
  }

  std::map<EdgeKey, IntraEdgeSet> sets;
  for (const auto& [sensor, seen] : by_sensor) {
    for (std::size_t a = 0; a < seen.size(); ++a) {
      for (std::size_t b = a + 1; b < seen.size(); ++b) {
        const InterEdge& e1 = *seen[a];
        const InterEdge& e2 = *seen[b];
        if (std::llabs(e1.t_us - e2.t_us) > snap.config.sync_window_us) continue;
        auto& set = sets[{e1.target, e2.target}];
        set.first = e1.target;
        set.second = e2.target;
        set.estimates.push_back({sensor, se3::relative(e1.pose, e2.pose), std::min(e1.t_us, e2.t_us)});
      }
    }
  }

  std::vector<IntraEdgeSet> out;
  out.reserve(sets.size());
  for (auto& [key, set] : sets) out.push_back(std::move(set));
  return out;
}

void DynamicSceneGraph::add_node(const NodeId& id) {
  auto& nodes = id.is_active() ? active_ : passive_;
  if (!nodes.insert(id).second) throw DuplicateNode("node already present: " + id.str());
}

void DynamicSceneGraph::remove_node(const NodeId& id) {
  auto& nodes = id.is_active() ? active_ : passive_;
  if (nodes.erase(id) == 0) throw UnknownNode("no such node: " + id.str());
  std::erase_if(edges_, [&](const auto& kv) { return kv.first.first == id || kv.first.second == id; });
}

bool DynamicSceneGraph::has_node(const NodeId& id) const {
  return id.is_active() ? active_.contains(id) : passive_.contains(id);
}

void DynamicSceneGraph::upsert_measurement(InterEdge edge) {
  if (!edge.sensor.is_active() || edge.target.is_active()) {
    throw std::invalid_argument("upsert_measurement: edges run from an active to a passive node");
  }
  if (!active_.contains(edge.sensor)) throw UnknownNode("unknown sensor: " + edge.sensor.str());
  if (!passive_.contains(edge.target)) throw UnknownNode("unknown target: " + edge.target.str());
  if (!is_valid_info(edge.info)) throw InvalidInfoMatrix("information matrix is not symmetric PSD");
  if (!edge.status) edge.info.setZero();

  EdgeKey key{edge.sensor, edge.target};
  auto it = edges_.find(key);
  if (it != edges_.end() && edge.t_us < it->second.t_us) {
    throw StaleTimestamp("measurement for " + edge.sensor.name + "->" + edge.target.name +
                         " is older than the stored one");
  }
  if (it != edges_.end()) {
    it->second = std::move(edge);
  } else {
    edges_.emplace(std::move(key), std::move(edge));
  }
}

std::vector<IntraEdgeSet> DynamicSceneGraph::derive_intra_edges(TimestampUs now) const {
  return scenefuse::derive_intra_edges(snapshot(now));
}

GraphSnapshot DynamicSceneGraph::snapshot(TimestampUs now) const {
  GraphSnapshot snap;
  snap.taken_at_us = now;
  snap.config = config_;
  snap.active = active_;
  snap.passive = passive_;
  const TimestampUs cutoff = now - config_.stale_after_us;
  for (const auto& [key, e] : edges_) {
    if (e.t_us >= cutoff) snap.edges.emplace(key, e);
  }
  return snap;
}

std::vector<InterEdge> DynamicSceneGraph::edges_of(const NodeId& node) const {
  std::vector<InterEdge> out;
  for (const auto& [key, e] : edges_) {
    if (key.first == node || key.second == node) out.push_back(e);
  }
  return out;
}

std::vector<std::string> DynamicSceneGraph::check_invariants() const {
  std::vector<std::string> bad;
  for (const auto& id : active_) {
    if (!id.is_active()) bad.push_back("passive id in active set: " + id.name);
  }
  for (const auto& id : passive_) {
    if (id.is_active()) bad.push_back("active id in passive set: " + id.name);
  }
  if (edges_.size() > active_.size() * passive_.size()) bad.push_back("more edges than sensor/target pairs");
  for (const auto& [key, e] : edges_) {
    const std::string tag = key.first.name + "->" + key.second.name;
    if (key.first != e.sensor || key.second != e.target) bad.push_back("edge key mismatch: " + tag);
    if (!e.sensor.is_active() || e.target.is_active()) bad.push_back("edge not active->passive: " + tag);
    if (!active_.contains(e.sensor) || !passive_.contains(e.target)) bad.push_back("dangling edge: " + tag);
    if (!e.status && !e.info.isZero(0.0)) bad.push_back("untracked edge carries information: " + tag);
    if (!is_valid_info(e.info)) bad.push_back("invalid information matrix: " + tag);
    if (std::abs(e.pose.rotation().norm() - 1.0) > 1e-9) bad.push_back("non-unit quaternion: " + tag);
  }
  return bad;
}

}  // namespace scenefuse
