#pragma once

#include <iosfwd>
#include <string_view>

#include <nlohmann/json.hpp>

// Structured logging: one JSON object per line on stderr,
// {"ts_us":..., "level":"info", "event":"...", ...fields}.
namespace scenefuse::log {

enum class Level { Debug, Info, Warn, Error, Off };

/// "debug" | "info" | "warn" | "error" | "off"; throws ConfigError otherwise.
Level parse_level(std::string_view name);
std::string_view level_name(Level level);

void set_level(Level level);
Level level();
/// Redirects output (nullptr restores stderr). Not synchronised with writes
/// in flight; set it before starting threads.
void set_sink(std::ostream* sink);

void write(Level level, std::string_view event, const nlohmann::json& fields = nlohmann::json::object());

inline void debug(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::Debug, event, fields);
}
inline void info(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::Info, event, fields);
}
inline void warn(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::Warn, event, fields);
}
inline void error(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::Error, event, fields);
}

}  // namespace scenefuse::log
