#include "scenefuse/logging.hpp"

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>

#include "scenefuse/errors.hpp"

namespace scenefuse::log {
namespace {

std::atomic<Level> g_level{Level::Warn};
std::ostream* g_sink = nullptr;
std::mutex g_mutex;

}  // namespace

Level parse_level(std::string_view name) {
  if (name == "debug") return Level::Debug;
  if (name == "info") return Level::Info;
  if (name == "warn" || name == "warning") return Level::Warn;
  if (name == "error") return Level::Error;
  if (name == "off") return Level::Off;
  throw ConfigError("unknown log level: " + std::string(name));
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: return "off";
  }
  return "?";
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }
void set_sink(std::ostream* sink) { g_sink = sink; }

void write(Level lvl, std::string_view event, const nlohmann::json& fields) {
  if (lvl == Level::Off || lvl < g_level.load()) return;
  const auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  nlohmann::json j{{"ts_us", now}, {"level", level_name(lvl)}, {"event", event}};
  if (fields.is_object()) {
    for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = it.value();
  }
  const std::string line = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  std::lock_guard lock(g_mutex);
  std::ostream& out = g_sink ? *g_sink : std::cerr;
  out << line;
  out.flush();
}

}  // namespace scenefuse::log
