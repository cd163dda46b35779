#pragma once

#include <chrono>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scenefuse/protocol.hpp"
#include "scenefuse/replay.hpp"
#include "scenefuse/simulator.hpp"
#include "scenefuse/socket.hpp"

namespace scenefuse {

/// One sensor's connection to the fusion server.
class SensorClient {
 public:
  /// Connects, sends HELLO and waits for WELCOME. Throws ConnectionLost or
  /// ProtocolError (e.g. an ERROR reply).
  SensorClient(const std::string& address, protocol::Hello hello,
               std::chrono::milliseconds timeout = std::chrono::seconds(5));

  const std::string& sensor_id() const { return hello_.sensor_id; }
  TimestampUs server_time_us() const { return server_time_us_; }

  /// Throws ConnectionLost.
  void send(const protocol::Message& msg);
  void send_raw(std::string_view line);
  /// Next server message; nullopt on timeout. Throws ConnectionLost once the
  /// server closed the connection.
  std::optional<protocol::Message> receive(std::chrono::milliseconds timeout);
  /// Sends BYE; the server then closes the connection.
  void bye();
  /// Drops the connection without BYE, as a crashed sensor would.
  void kill();

 private:
  protocol::Hello hello_;
  net::Socket sock_;
  net::LineReader reader_;
  TimestampUs server_time_us_ = 0;
};

struct DriveOptions {
  enum class Speed { Realtime, Max };
  Speed speed = Speed::Max;
  /// Shift log timestamps so the first one maps to the server clock.
  bool rebase = true;
  std::string sensor_type = "sim";
  /// Crash this sensor once `kill_after_s` of log time has been streamed.
  std::optional<std::string> kill_sensor;
  double kill_after_s = 0.0;
  /// Keep receiving updates this long after every client finished sending.
  std::chrono::milliseconds settle{500};
  std::chrono::milliseconds connect_timeout{5000};
};

struct DriveResult {
  std::vector<ResultRecord> records;
  /// Steady-clock seconds since drive start at which each record arrived.
  std::vector<double> received_at_s;
  /// Sensors whose connection was lost unexpectedly.
  std::vector<std::string> failed;
  std::optional<std::string> killed;
  double killed_at_s = 0.0;

  bool ok() const { return failed.empty(); }
};

/// One client per sensor in `log`: HELLO, stream measurements, BYE. Every
/// POSE_UPDATE received is kept and, when `results_log` is given, appended
/// to it as an NDJSON result record. Connection failures are reported in
/// DriveResult::failed with the partial results retained.
DriveResult drive(const std::string& address, const sim::MeasurementLog& log, const DriveOptions& opts = {},
                  std::ostream* results_log = nullptr);

}  // namespace scenefuse
