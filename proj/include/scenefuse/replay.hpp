#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenefuse/fusion.hpp"
#include "scenefuse/protocol.hpp"
#include "scenefuse/scene_graph.hpp"

namespace scenefuse {

/// A POSE_UPDATE as received by one sensor; the results-log line format is
/// the update message plus a "sensor_id" field.
struct ResultRecord {
  std::string sensor_id;
  protocol::PoseUpdate update;

  nlohmann::json to_json() const;
  static ResultRecord from_json(const nlohmann::json& j);
};

struct ReplayOptions {
  GraphConfig graph;
  pgo::SolveOptions solve;
  bool auto_register = true;
  /// Weight for measurements without info_diag.
  InfoMatrix default_info = InfoMatrix::Identity();
  /// Run a fusion cycle after every n-th distinct timestamp. The final
  /// timestamp always gets a cycle.
  std::size_t cycle_every = 1;
};

struct ReplayResult {
  std::vector<ResultRecord> records;
  std::optional<CycleResult> last;
  std::size_t cycles = 0;
  std::size_t dropped_stale = 0;
};

/// Offline counterpart of the server: ingests the log in timestamp order
/// with the same rules and runs the same fusion cycle on the data clock.
/// Sensors and targets are registered on first appearance.
ReplayResult replay(const std::vector<protocol::Measurement>& log, const ReplayOptions& opts = {});

}  // namespace scenefuse
