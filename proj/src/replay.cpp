#include "scenefuse/replay.hpp"

#include <algorithm>

#include "scenefuse/errors.hpp"

namespace scenefuse {

nlohmann::json ResultRecord::to_json() const {
  nlohmann::json j = protocol::to_json(update);
  j["sensor_id"] = sensor_id;
  return j;
}

ResultRecord ResultRecord::from_json(const nlohmann::json& j) {
  ResultRecord r;
  const auto msg = protocol::from_json(j);
  if (!std::holds_alternative<protocol::PoseUpdate>(msg)) throw ProtocolError("result record is not an update");
  r.update = std::get<protocol::PoseUpdate>(msg);
  auto it = j.find("sensor_id");
  if (it == j.end() || !it->is_string()) throw ProtocolError("result record lacks sensor_id");
  r.sensor_id = it->get<std::string>();
  return r;
}

ReplayResult replay(const std::vector<protocol::Measurement>& log, const ReplayOptions& opts) {
  std::vector<const protocol::Measurement*> order;
  order.reserve(log.size());
  for (const auto& m : log) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->t_us < b->t_us; });

  ReplayResult out;
  DynamicSceneGraph graph(opts.graph);
  FusionEngine engine(opts.solve);
  const std::size_t every = std::max<std::size_t>(1, opts.cycle_every);
  std::size_t distinct = 0;

  for (std::size_t k = 0; k < order.size();) {
    const TimestampUs t = order[k]->t_us;
    for (; k < order.size() && order[k]->t_us == t; ++k) {
      const auto& m = *order[k];
      const NodeId sensor = NodeId::active(m.sensor_id);
      if (!graph.has_node(sensor)) graph.add_node(sensor);
      if (ingest_measurement(graph, m, opts.default_info, opts.auto_register) == IngestOutcome::Stale) {
        ++out.dropped_stale;
      }
    }
    ++distinct;
    if (distinct % every != 0 && k < order.size()) continue;

    const std::vector<NodeId> sensors(graph.active_nodes().begin(), graph.active_nodes().end());
    CycleResult cycle = engine.run_cycle(graph.snapshot(t), sensors);
    ++out.cycles;
    for (const auto& sensor : sensors) out.records.push_back({sensor.name, cycle.update_for(sensor)});
    out.last = std::move(cycle);
  }
  return out;
}

}  // namespace scenefuse
