#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenefuse/pgo.hpp"
#include "scenefuse/scene_graph.hpp"

// Newline-delimited JSON messages exchanged between sensors and the fusion
// server, plus the JSON exports of snapshots and solve reports. Units are
// metres and microseconds; poses are [tx, ty, tz, qw, qx, qy, qz] with
// qw >= 0. Unknown fields are ignored on input.
namespace scenefuse::protocol {

using nlohmann::json;

json pose_to_json(const Pose& p);
/// Throws ProtocolError unless `j` is an array of 7 finite numbers with a
/// non-zero quaternion.
Pose pose_from_json(const json& j);

json vector6_to_json(const Vector6d& v);
Vector6d vector6_from_json(const json& j);

struct Hello {
  std::string sensor_id;
  std::string sensor_type;
  std::vector<std::string> targets;
};

struct Welcome {
  TimestampUs server_time_us = 0;
};

struct Measurement {
  std::string sensor_id;
  std::string target;
  TimestampUs t_us = 0;
  Pose pose;
  bool status = true;
  std::optional<Vector6d> info_diag;
};

struct PoseEntry {
  std::string target;
  std::optional<Pose> pose;
  bool direct = false;
  Vector6d uncertainty = Vector6d::Zero();
  bool lose_track = true;
};

struct PoseUpdate {
  TimestampUs solve_t_us = 0;
  std::vector<PoseEntry> poses;
};

struct Query {
  std::string target;
};

struct QueryResult {
  std::string target;
  std::optional<Pose> pose;
  bool direct = false;
  std::optional<Vector6d> uncertainty;
  std::vector<std::string> path;
  TimestampUs age_us = 0;
  bool lose_track = true;
};

struct Bye {};

struct ErrorMessage {
  std::string code;
  std::string detail;
};

/// A well-formed line whose "type" is not part of the protocol.
struct UnknownMessage {
  std::string type;
};

using Message = std::variant<Hello, Welcome, Measurement, PoseUpdate, Query, QueryResult, Bye, ErrorMessage,
                             UnknownMessage>;

json to_json(const Message& msg);
/// Serialised message followed by '\n'.
std::string to_line(const Message& msg);

Message from_json(const json& j);
/// Throws ProtocolError on malformed JSON or missing/ill-typed fields.
Message parse_line(std::string_view line);

Measurement measurement_from_json(const json& j);
json measurement_to_json(const Measurement& m);

/// {active: [...], passive: [...], edges: [{sensor, target, pose, t_us, status, info_diag}]}
json snapshot_to_json(const GraphSnapshot& snap);
/// {converged, iterations, cost, poses, uncertainty, anchor, ...}
json report_to_json(const pgo::SolveReport& report);

/// Per-sensor-type default weights: diag(1/sigma_t^2 x3, 1/sigma_r^2 x3).
/// "ots": 0.25 mm / 0.05 deg, "hmd": 2 mm / 0.5 deg, identity otherwise.
InfoMatrix default_info_for(const std::string& sensor_type);

}  // namespace scenefuse::protocol
