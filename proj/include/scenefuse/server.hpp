#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenefuse/config.hpp"
#include "scenefuse/fusion.hpp"
#include "scenefuse/scene_graph.hpp"

namespace scenefuse {

struct ServerMetrics {
  std::uint64_t sessions_opened = 0;
  std::uint64_t sessions_closed = 0;
  std::uint64_t live_sessions = 0;
  std::uint64_t measurements = 0;
  std::uint64_t dropped_stale = 0;
  std::uint64_t rejected = 0;  // allow-list or unknown-target refusals
  std::uint64_t protocol_errors = 0;
  std::uint64_t cycles = 0;
  std::uint64_t skipped_cycles = 0;
  std::uint64_t updates_sent = 0;
  std::uint64_t solve_failures = 0;
  /// snapshot + solve + completion + serialisation, in milliseconds.
  std::size_t latency_samples = 0;
  double latency_mean_ms = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p99_ms = 0.0;
  double latency_max_ms = 0.0;

  nlohmann::json to_json() const;
};

/// Central fusion server: one reader and one sender thread per sensor
/// session, a single graph-writer thread applying every mutation in arrival
/// order, a periodic fusion loop, and the operator HTTP bridge.
class FusionServer {
 public:
  explicit FusionServer(config::ServerConfig cfg);
  ~FusionServer();
  FusionServer(const FusionServer&) = delete;
  FusionServer& operator=(const FusionServer&) = delete;

  /// Binds both listeners (BindFailure) and starts all threads.
  void start();
  /// Sends BYE to every session, closes them and joins all threads.
  /// Idempotent.
  void stop();
  /// Async-signal-safe request for wait() to return.
  void request_stop();
  /// Blocks until request_stop(), then stops the server.
  void wait();

  std::uint16_t port() const;
  /// 0 when the bridge is disabled.
  std::uint16_t operator_port() const;
  /// Current server clock: wall microseconds since start, or the newest
  /// ingested measurement time in data-clock mode.
  TimestampUs now_us() const;

  GraphSnapshot snapshot();
  std::shared_ptr<const CycleResult> latest_cycle() const;
  ServerMetrics metrics() const;
  std::vector<std::string> live_sensors() const;

  /// Waits until every mutation queued so far is applied and a fusion cycle
  /// has run on the resulting graph.
  bool wait_settled(std::chrono::milliseconds timeout);

  /// Operator actions. DuplicateNode / UnknownNode / IneligibleAnchor.
  void add_passive(const std::string& name);
  /// `id` is "active:x", "passive:x" or a bare name (sensors first).
  void remove_node(const std::string& id);
  void force_anchor(const std::string& sensor);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scenefuse
