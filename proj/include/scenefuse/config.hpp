#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "scenefuse/metrics.hpp"
#include "scenefuse/pgo.hpp"
#include "scenefuse/simulator.hpp"

// Configuration files are TOML (JSON accepted as a fallback) with optional
// [scenario], [server] and [eval] sections. Values resolve as command-line
// flags > config file > built-in defaults; the file defaults to
// $SCENEFUSE_CONFIG when no --config flag is given.
namespace scenefuse::config {

enum class ClockMode {
  Wall,  // solves stamped with the server's monotonic clock
  Data,  // solves stamped with the newest ingested measurement time
};

struct ServerConfig {
  std::string listen = "127.0.0.1:7878";
  /// Empty disables the operator bridge.
  std::string operator_listen = "127.0.0.1:7879";
  double fusion_hz = 20.0;
  GraphConfig graph;
  /// Passive nodes permitted when non-empty; others are refused.
  std::optional<std::filesystem::path> allow_list;
  bool auto_register = true;
  /// NDJSON session log (inbound measurements, outbound updates).
  std::optional<std::filesystem::path> log_path;
  ClockMode clock = ClockMode::Wall;
  pgo::SolveOptions solve;
};

ClockMode parse_clock(std::string_view name);

/// Parses TOML, falling back to JSON, and returns the document as JSON.
/// Throws ConfigError when neither parser accepts the text.
nlohmann::json parse_text(std::string_view text);
nlohmann::json load_file(const std::filesystem::path& path);

/// $SCENEFUSE_CONFIG when set and non-empty.
std::optional<std::filesystem::path> default_path();

/// Overlay the matching section of `doc` onto `out`; absent keys keep their
/// current values. Throws ConfigError on ill-typed values.
void apply(const nlohmann::json& doc, sim::ScenarioConfig& out);
void apply(const nlohmann::json& doc, ServerConfig& out);
void apply(const nlohmann::json& doc, metrics::EvalOptions& out);

}  // namespace scenefuse::config
