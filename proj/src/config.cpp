#include "scenefuse/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "scenefuse/errors.hpp"

namespace scenefuse::config {
namespace {

using nlohmann::json;

json to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    json out = json::object();
    for (auto&& [key, value] : *t) out[std::string(key.str())] = to_json(value);
    return out;
  }
  if (auto a = node.as_array()) {
    json out = json::array();
    for (auto&& v : *a) out.push_back(to_json(v));
    return out;
  }
  if (auto v = node.as_string()) return v->get();
  if (auto v = node.as_integer()) return v->get();
  if (auto v = node.as_floating_point()) return v->get();
  if (auto v = node.as_boolean()) return v->get();
  std::ostringstream os;
  node.visit([&](auto&& n) { os << n; });
  return os.str();
}

const json* section(const json& doc, const char* name) {
  if (!doc.is_object()) return nullptr;
  auto it = doc.find(name);
  if (it == doc.end()) return nullptr;
  if (!it->is_object()) throw ConfigError(std::string("[") + name + "] must be a table");
  return &*it;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!it->is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
  }
}

sim::NoiseModel read_noise(const json& j, sim::NoiseModel base) {
  if (!j.is_object()) throw ConfigError("noise entries must be tables");
  read(j, "sigma_t", base.sigma_t);
  read(j, "sigma_r", base.sigma_r);
  return base;
}

}  // namespace

ClockMode parse_clock(std::string_view name) {
  if (name == "wall") return ClockMode::Wall;
  if (name == "data") return ClockMode::Data;
  throw ConfigError("clock must be \"wall\" or \"data\"");
}

json parse_text(std::string_view text) {
  std::string toml_error;
  try {
    return to_json(toml::parse(text));
  } catch (const toml::parse_error& e) {
    toml_error = std::string(e.description());
  }
  json j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("config is neither valid TOML (" + toml_error + ") nor a JSON object");
  }
  return j;
}

json load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_text(os.str());
}

std::optional<std::filesystem::path> default_path() {
  const char* env = std::getenv("SCENEFUSE_CONFIG");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return std::filesystem::path(env);
}

void apply(const json& doc, sim::ScenarioConfig& out) {
  const json* s = section(doc, "scenario");
  if (!s) return;
  read(*s, "seed", out.seed);
  read(*s, "duration_s", out.duration_s);
  read(*s, "rate_hz", out.rate_hz);
  read(*s, "n_sensors", out.n_sensors);
  read(*s, "n_targets", out.n_targets);
  read(*s, "p_block", out.p_block);
  read(*s, "sensors_static", out.sensors_static);
  read(*s, "sensor_radius", out.sensor_radius);
  read(*s, "target_cube", out.target_cube);
  read(*s, "sensor_type", out.sensor_type);
  if (auto it = s->find("accel_limits"); it != s->end()) {
    if (!it->is_object()) throw ConfigError("accel_limits must be a table");
    read(*it, "linear", out.accel.linear);
    read(*it, "angular", out.accel.angular);
  }
  if (auto it = s->find("tether"); it != s->end()) {
    if (!it->is_object()) throw ConfigError("tether must be a table");
    read(*it, "stiffness", out.tether.stiffness);
    read(*it, "damping", out.tether.damping);
  }
  if (auto it = s->find("default_noise"); it != s->end()) out.default_noise = read_noise(*it, out.default_noise);
  if (auto it = s->find("noise"); it != s->end()) {
    if (it->is_object()) {
      out.noise.assign(1, read_noise(*it, out.default_noise));
    } else if (it->is_array()) {
      out.noise.clear();
      for (const auto& n : *it) out.noise.push_back(read_noise(n, out.default_noise));
    } else {
      throw ConfigError("noise must be a table or an array of tables");
    }
  }
  if (auto it = s->find("burst"); it != s->end()) {
    if (!it->is_object()) throw ConfigError("burst must be a table");
    read(*it, "enabled", out.burst.enabled);
    read(*it, "p_enter", out.burst.p_enter);
    read(*it, "p_exit", out.burst.p_exit);
  }
  out.validate();
}

void apply(const json& doc, ServerConfig& out) {
  const json* s = section(doc, "server");
  if (!s) return;
  read(*s, "listen", out.listen);
  read(*s, "operator_listen", out.operator_listen);
  read(*s, "fusion_hz", out.fusion_hz);
  read(*s, "auto_register", out.auto_register);
  double stale_ms = static_cast<double>(out.graph.stale_after_us) / 1e3;
  read(*s, "stale_ms", stale_ms);
  out.graph.stale_after_us = static_cast<TimestampUs>(stale_ms * 1e3);
  double sync_ms = static_cast<double>(out.graph.sync_window_us) / 1e3;
  read(*s, "sync_window_ms", sync_ms);
  out.graph.sync_window_us = static_cast<TimestampUs>(sync_ms * 1e3);
  std::string path;
  read(*s, "allow_list", path);
  if (!path.empty()) out.allow_list = path;
  path.clear();
  read(*s, "log", path);
  if (!path.empty()) out.log_path = path;
  std::string clock;
  read(*s, "clock", clock);
  if (!clock.empty()) out.clock = parse_clock(clock);
  read(*s, "max_iterations", out.solve.max_iter);
  if (!(out.fusion_hz > 0.0)) throw ConfigError("fusion_hz must be > 0");
  if (out.graph.stale_after_us < 0) throw ConfigError("stale_ms must be >= 0");
}

void apply(const json& doc, metrics::EvalOptions& out) {
  const json* s = section(doc, "eval");
  if (!s) return;
  read(*s, "delta_s", out.delta_s);
  read(*s, "lag_search", out.lag_search);
  read(*s, "hold_last", out.hold_last);
  double tol_ms = static_cast<double>(out.tolerance_us) / 1e3;
  read(*s, "tolerance_ms", tol_ms);
  out.tolerance_us = static_cast<TimestampUs>(tol_ms * 1e3);
  double lag_ms = static_cast<double>(out.max_lag_us) / 1e3;
  read(*s, "max_lag_ms", lag_ms);
  out.max_lag_us = static_cast<TimestampUs>(lag_ms * 1e3);
  if (!(out.delta_s > 0.0)) throw ConfigError("delta_s must be > 0");
}

}  // namespace scenefuse::config
