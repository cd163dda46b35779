#include "scenefuse/client.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "scenefuse/errors.hpp"
#include "scenefuse/logging.hpp"

namespace scenefuse {
namespace {
using Clock = std::chrono::steady_clock;
}

SensorClient::SensorClient(const std::string& address, protocol::Hello hello, std::chrono::milliseconds timeout)
    : hello_(std::move(hello)), sock_(net::connect_tcp(net::Endpoint::parse(address))), reader_(sock_.fd()) {
  send(hello_);
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) throw ConnectionLost("no welcome from " + address);
    auto msg = receive(left);
    if (!msg) continue;
    if (auto* w = std::get_if<protocol::Welcome>(&*msg)) {
      server_time_us_ = w->server_time_us;
      return;
    }
    if (auto* e = std::get_if<protocol::ErrorMessage>(&*msg)) {
      throw ProtocolError("server refused " + hello_.sensor_id + ": " + e->code + " " + e->detail);
    }
  }
}

void SensorClient::send(const protocol::Message& msg) {
  send_raw(protocol::to_line(msg));
}

void SensorClient::send_raw(std::string_view line) {
  if (!sock_.valid() || !net::send_all(sock_.fd(), line)) {
    throw ConnectionLost("connection of " + hello_.sensor_id + " lost");
  }
}

std::optional<protocol::Message> SensorClient::receive(std::chrono::milliseconds timeout) {
  if (!sock_.valid()) throw ConnectionLost("connection of " + hello_.sensor_id + " closed");
  std::string line;
  for (;;) {
    switch (reader_.read_line(line, timeout)) {
      case net::LineReader::Status::Timeout:
        return std::nullopt;
      case net::LineReader::Status::Closed:
      case net::LineReader::Status::TooLong:
        throw ConnectionLost("server closed the connection of " + hello_.sensor_id);
      case net::LineReader::Status::Line:
        if (line.empty()) continue;
        return protocol::parse_line(line);
    }
  }
}

void SensorClient::bye() {
  try {
    send(protocol::Bye{});
  } catch (const ConnectionLost&) {
  }
}

void SensorClient::kill() {
  sock_.shutdown();
}

DriveResult drive(const std::string& address, const sim::MeasurementLog& log, const DriveOptions& opts,
                  std::ostream* results_log) {
  DriveResult result;
  const auto start = Clock::now();

  std::map<std::string, std::vector<const protocol::Measurement*>> by_sensor;
  std::map<std::string, std::set<std::string>> targets;
  TimestampUs t0 = std::numeric_limits<TimestampUs>::max();
  for (const auto& m : log) {
    by_sensor[m.sensor_id].push_back(&m);
    targets[m.sensor_id].insert(m.target);
    t0 = std::min(t0, m.t_us);
  }
  if (by_sensor.empty()) return result;
  for (auto& [name, ms] : by_sensor) {
    std::stable_sort(ms.begin(), ms.end(), [](const auto* a, const auto* b) { return a->t_us < b->t_us; });
  }

  std::mutex mu;  // guards result and results_log
  auto record = [&](const std::string& sensor, protocol::PoseUpdate u) {
    const double at = std::chrono::duration<double>(Clock::now() - start).count();
    ResultRecord r{sensor, std::move(u)};
    std::lock_guard lock(mu);
    if (results_log) *results_log << r.to_json().dump() << '\n';
    result.records.push_back(std::move(r));
    result.received_at_s.push_back(at);
  };
  auto fail = [&](const std::string& sensor, const std::string& why) {
    log::warn("connection_lost", {{"sensor", sensor}, {"detail", why}});
    std::lock_guard lock(mu);
    if (std::find(result.failed.begin(), result.failed.end(), sensor) == result.failed.end()) {
      result.failed.push_back(sensor);
    }
  };

  // Connect everyone first so all clients share one timestamp offset.
  std::map<std::string, std::unique_ptr<SensorClient>> clients;
  TimestampUs server_time = 0;
  for (const auto& [name, ms] : by_sensor) {
    protocol::Hello hello{name, opts.sensor_type, {targets[name].begin(), targets[name].end()}};
    try {
      clients[name] = std::make_unique<SensorClient>(address, hello, opts.connect_timeout);
      server_time = std::max(server_time, clients[name]->server_time_us());
    } catch (const Error& e) {
      fail(name, e.what());
    }
  }
  const TimestampUs offset = opts.rebase ? server_time - t0 : 0;
  const auto stream_start = Clock::now();

  std::mutex done_mu;
  std::condition_variable done_cv;
  std::size_t senders_left = clients.size();
  std::vector<std::thread> threads;

  for (auto& [name, client] : clients) {
    SensorClient* c = client.get();
    const std::string sensor = name;
    const auto& ms = by_sensor[name];
    threads.emplace_back([&, c, sensor, &ms = ms] {
      std::atomic<bool> stop_rx{false};
      std::atomic<bool> rx_done{false};
      std::thread rx([&] {
        while (!stop_rx) {
          try {
            auto msg = c->receive(std::chrono::milliseconds(50));
            if (!msg) continue;
            if (auto* u = std::get_if<protocol::PoseUpdate>(&*msg)) record(sensor, std::move(*u));
            if (std::holds_alternative<protocol::Bye>(*msg)) break;
          } catch (const ConnectionLost&) {
            break;
          } catch (const ProtocolError& e) {
            log::warn("bad_server_message", {{"sensor", sensor}, {"detail", e.what()}});
          }
        }
        rx_done = true;
      });

      bool killed = false;
      bool lost = false;
      const bool doomed = opts.kill_sensor && *opts.kill_sensor == sensor;
      for (const auto* m : ms) {
        const double log_s = static_cast<double>(m->t_us - t0) * 1e-6;
        if (doomed && log_s >= opts.kill_after_s) {
          c->kill();
          killed = true;
          std::lock_guard lock(mu);
          result.killed = sensor;
          result.killed_at_s = std::chrono::duration<double>(Clock::now() - start).count();
          break;
        }
        if (opts.speed == DriveOptions::Speed::Realtime) {
          std::this_thread::sleep_until(stream_start + std::chrono::microseconds(m->t_us - t0));
        }
        protocol::Measurement out = *m;
        out.t_us += offset;
        try {
          c->send(out);
        } catch (const ConnectionLost& e) {
          fail(sensor, e.what());
          lost = true;
          break;
        }
      }

      {
        std::unique_lock lock(done_mu);
        --senders_left;
        done_cv.notify_all();
        done_cv.wait(lock, [&] { return senders_left == 0; });
      }
      if (!killed && !lost) {
        std::this_thread::sleep_for(opts.settle);
        c->bye();
        // the server answers BYE by closing the connection
        const auto deadline = Clock::now() + std::chrono::seconds(2);
        while (!rx_done && Clock::now() < deadline) std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      stop_rx = true;
      rx.join();
    });
  }
  for (auto& t : threads) t.join();
  return result;
}

}  // namespace scenefuse
