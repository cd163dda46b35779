#include "scenefuse/protocol.hpp"

#include <cmath>
#include <numbers>

#include "scenefuse/errors.hpp"

namespace scenefuse::protocol {
namespace {

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(std::string("missing field \"") + key + "\"");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw ProtocolError(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::int64_t require_int(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number_integer()) throw ProtocolError(std::string("field \"") + key + "\" must be an integer");
  return v.get<std::int64_t>();
}

bool require_bool(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_boolean()) throw ProtocolError(std::string("field \"") + key + "\" must be a boolean");
  return v.get<bool>();
}

std::vector<std::string> string_list(const json& j) {
  if (!j.is_array()) throw ProtocolError("expected an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ProtocolError("expected an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

template <std::size_t N>
std::array<double, N> number_array(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw ProtocolError(std::string(what) + " must be an array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw ProtocolError(std::string(what) + " must contain numbers");
    out[i] = j[i].get<double>();
    if (!std::isfinite(out[i])) throw ProtocolError(std::string(what) + " must be finite");
  }
  return out;
}

json entry_to_json(const PoseEntry& e) {
  json j{{"target", e.target},
         {"direct", e.direct},
         {"uncertainty", vector6_to_json(e.uncertainty)},
         {"lose_track", e.lose_track}};
  j["pose"] = e.pose ? pose_to_json(*e.pose) : json(nullptr);
  return j;
}

PoseEntry entry_from_json(const json& j) {
  PoseEntry e;
  e.target = require_string(j, "target");
  e.direct = require_bool(j, "direct");
  e.lose_track = require_bool(j, "lose_track");
  if (auto it = j.find("pose"); it != j.end() && !it->is_null()) e.pose = pose_from_json(*it);
  if (auto it = j.find("uncertainty"); it != j.end() && !it->is_null()) e.uncertainty = vector6_from_json(*it);
  return e;
}

}  // namespace

json pose_to_json(const Pose& p) {
  const auto a = p.to_array();
  return json(std::vector<double>(a.begin(), a.end()));
}

Pose pose_from_json(const json& j) {
  const auto a = number_array<7>(j, "pose");
  if (std::hypot(a[3], a[4], a[5]) == 0.0 && a[6] == 0.0) throw ProtocolError("pose quaternion is zero");
  return Pose::from_array(a);
}

json vector6_to_json(const Vector6d& v) {
  return json(std::vector<double>(v.data(), v.data() + 6));
}

Vector6d vector6_from_json(const json& j) {
  const auto a = number_array<6>(j, "6-vector");
  return Vector6d(a.data());
}

Measurement measurement_from_json(const json& j) {
  Measurement m;
  m.sensor_id = require_string(j, "sensor_id");
  m.target = require_string(j, "target");
  m.t_us = require_int(j, "t_us");
  m.pose = pose_from_json(require(j, "pose"));
  m.status = require_bool(j, "status");
  if (auto it = j.find("info_diag"); it != j.end() && !it->is_null()) {
    m.info_diag = vector6_from_json(*it);
    if ((m.info_diag->array() < 0.0).any()) throw ProtocolError("info_diag must be non-negative");
  }
  if (m.sensor_id.empty() || m.target.empty()) throw ProtocolError("sensor_id and target must be non-empty");
  return m;
}

json measurement_to_json(const Measurement& m) {
  json j{{"type", "meas"},          {"sensor_id", m.sensor_id}, {"target", m.target},
         {"t_us", m.t_us},          {"pose", pose_to_json(m.pose)}, {"status", m.status}};
  if (m.info_diag) j["info_diag"] = vector6_to_json(*m.info_diag);
  return j;
}

json to_json(const Message& msg) {
  return std::visit(
      Overloaded{
          [](const Hello& h) {
            return json{{"type", "hello"}, {"sensor_id", h.sensor_id}, {"sensor_type", h.sensor_type},
                        {"targets", h.targets}};
          },
          [](const Welcome& w) { return json{{"type", "welcome"}, {"server_time_us", w.server_time_us}}; },
          [](const Measurement& m) { return measurement_to_json(m); },
          [](const PoseUpdate& u) {
            json poses = json::array();
            for (const auto& e : u.poses) poses.push_back(entry_to_json(e));
            return json{{"type", "update"}, {"solve_t_us", u.solve_t_us}, {"poses", poses}};
          },
          [](const Query& q) { return json{{"type", "query"}, {"target", q.target}}; },
          [](const QueryResult& r) {
            json j{{"type", "result"}, {"target", r.target},   {"direct", r.direct},
                   {"path", r.path},   {"age_us", r.age_us},   {"lose_track", r.lose_track}};
            if (r.pose) j["pose"] = pose_to_json(*r.pose);
            if (r.uncertainty) j["uncertainty"] = vector6_to_json(*r.uncertainty);
            return j;
          },
          [](const Bye&) { return json{{"type", "bye"}}; },
          [](const ErrorMessage& e) { return json{{"type", "error"}, {"code", e.code}, {"detail", e.detail}}; },
          [](const UnknownMessage& u) { return json{{"type", u.type}}; },
      },
      msg);
}

std::string to_line(const Message& msg) {
  return to_json(msg).dump() + "\n";
}

Message from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  const std::string type = require_string(j, "type");
  if (type == "hello") {
    Hello h;
    h.sensor_id = require_string(j, "sensor_id");
    if (h.sensor_id.empty()) throw ProtocolError("sensor_id must be non-empty");
    if (auto it = j.find("sensor_type"); it != j.end() && it->is_string()) h.sensor_type = it->get<std::string>();
    if (auto it = j.find("targets"); it != j.end()) h.targets = string_list(*it);
    return h;
  }
  if (type == "welcome") return Welcome{require_int(j, "server_time_us")};
  if (type == "meas") return measurement_from_json(j);
  if (type == "update") {
    PoseUpdate u;
    u.solve_t_us = require_int(j, "solve_t_us");
    const json& poses = require(j, "poses");
    if (!poses.is_array()) throw ProtocolError("poses must be an array");
    for (const auto& p : poses) u.poses.push_back(entry_from_json(p));
    return u;
  }
  if (type == "query") return Query{require_string(j, "target")};
  if (type == "result") {
    QueryResult r;
    r.target = require_string(j, "target");
    r.direct = require_bool(j, "direct");
    r.lose_track = require_bool(j, "lose_track");
    r.age_us = require_int(j, "age_us");
    r.path = string_list(require(j, "path"));
    if (auto it = j.find("pose"); it != j.end() && !it->is_null()) r.pose = pose_from_json(*it);
    if (auto it = j.find("uncertainty"); it != j.end() && !it->is_null()) r.uncertainty = vector6_from_json(*it);
    return r;
  }
  if (type == "bye") return Bye{};
  if (type == "error") {
    ErrorMessage e;
    e.code = require_string(j, "code");
    if (auto it = j.find("detail"); it != j.end() && it->is_string()) e.detail = it->get<std::string>();
    return e;
  }
  return UnknownMessage{type};
}

Message parse_line(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) throw ProtocolError("malformed JSON");
  return from_json(j);
}

json snapshot_to_json(const GraphSnapshot& snap) {
  json active = json::array();
  json passive = json::array();
  for (const auto& id : snap.active) active.push_back(id.name);
  for (const auto& id : snap.passive) passive.push_back(id.name);
  json edges = json::array();
  for (const auto& [key, e] : snap.edges) {
    edges.push_back({{"sensor", e.sensor.name},
                     {"target", e.target.name},
                     {"pose", pose_to_json(e.pose)},
                     {"t_us", e.t_us},
                     {"status", e.status},
                     {"info_diag", vector6_to_json(e.info.diagonal())}});
  }
  return {{"active", active}, {"passive", passive}, {"edges", edges}, {"taken_at_us", snap.taken_at_us}};
}

json report_to_json(const pgo::SolveReport& report) {
  json poses = json::object();
  for (const auto& [id, p] : report.state.active) poses[id.name] = pose_to_json(p);
  for (const auto& [id, p] : report.state.passive) poses[id.name] = pose_to_json(p);
  json uncertainty = json::object();
  for (const auto& [id, u] : report.uncertainties) uncertainty[id.name] = vector6_to_json(u);
  json excluded = json::array();
  for (const auto& id : report.excluded) excluded.push_back(id.name);
  return {{"converged", report.converged},
          {"iterations", report.iterations},
          {"cost", report.cost_trace},
          {"poses", poses},
          {"uncertainty", uncertainty},
          {"anchor", report.state.anchor.name},
          {"termination", report.termination},
          {"damped_steps", report.damped_steps},
          {"excluded", excluded}};
}

InfoMatrix default_info_for(const std::string& sensor_type) {
  auto weights = [](double sigma_t, double sigma_r_deg) {
    const double sigma_r = sigma_r_deg * std::numbers::pi / 180.0;
    Vector6d d;
    d << Eigen::Vector3d::Constant(1.0 / (sigma_t * sigma_t)), Eigen::Vector3d::Constant(1.0 / (sigma_r * sigma_r));
    return info_from_diagonal(d);
  };
  if (sensor_type == "ots") return weights(0.25e-3, 0.05);
  if (sensor_type == "hmd") return weights(2e-3, 0.5);
  return InfoMatrix::Identity();
}

}  // namespace scenefuse::protocol
