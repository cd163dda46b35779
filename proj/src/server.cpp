#include "scenefuse/server.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "scenefuse/completion.hpp"
#include "scenefuse/errors.hpp"
#include "scenefuse/logging.hpp"
#include "scenefuse/protocol.hpp"
#include "scenefuse/socket.hpp"

namespace scenefuse {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::size_t kMaxOutbound = 4096;
constexpr std::size_t kLatencyWindow = 100000;

std::string error_line(const std::string& code, const std::string& detail) {
  return protocol::to_line(protocol::ErrorMessage{code, detail});
}

std::set<std::string> read_allow_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open allow-list " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  const std::string text = os.str();
  std::set<std::string> out;
  const json j = json::parse(text, nullptr, false);
  if (!j.is_discarded() && j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_string()) throw ConfigError("allow-list entries must be strings");
      out.insert(v.get<std::string>());
    }
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

// Serialises work onto one thread.
class WorkQueue {
 public:
  void post(std::function<void()> fn) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      q_.push_back(std::move(fn));
    }
    cv_.notify_one();
  }

  template <typename F>
  auto call(F fn) -> std::future<decltype(fn())> {
    auto task = std::make_shared<std::packaged_task<decltype(fn())()>>(std::move(fn));
    auto fut = task->get_future();
    post([task] { (*task)(); });
    return fut;
  }

  void run() {
    for (;;) {
      std::function<void()> fn;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !q_.empty() || closed_; });
        if (q_.empty()) return;
        fn = std::move(q_.front());
        q_.pop_front();
      }
      fn();
    }
  }

  /// Remaining tasks still run; later posts are discarded.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> q_;
  bool closed_ = false;
};

}  // namespace

json ServerMetrics::to_json() const {
  return {{"sessions_opened", sessions_opened},
          {"sessions_closed", sessions_closed},
          {"live_sessions", live_sessions},
          {"measurements", measurements},
          {"dropped_stale", dropped_stale},
          {"rejected", rejected},
          {"protocol_errors", protocol_errors},
          {"cycles", cycles},
          {"skipped_cycles", skipped_cycles},
          {"updates_sent", updates_sent},
          {"solve_failures", solve_failures},
          {"cycle_latency_ms",
           {{"samples", latency_samples},
            {"mean", latency_mean_ms},
            {"p50", latency_p50_ms},
            {"p99", latency_p99_ms},
            {"max", latency_max_ms}}}};
}

struct FusionServer::Impl {
  struct Session : std::enable_shared_from_this<Session> {
    net::Socket sock;
    std::string sensor;  // empty until HELLO
    InfoMatrix default_info = InfoMatrix::Identity();
    std::thread reader;
    std::thread sender;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> outbound;
    bool closing = false;
    std::atomic<bool> finished{false};

    void enqueue(std::string line) {
      {
        std::lock_guard lock(mu);
        if (closing) return;
        if (outbound.size() >= kMaxOutbound) {
          closing = true;  // consumer too slow; drop it
          outbound.clear();
        } else {
          outbound.push_back(std::move(line));
        }
      }
      cv.notify_one();
    }

    /// Flushes what is queued, then shuts the socket down.
    void close_after_flush(std::string last_line = {}) {
      {
        std::lock_guard lock(mu);
        if (!closing && !last_line.empty()) outbound.push_back(std::move(last_line));
        closing = true;
      }
      cv.notify_one();
    }

    void send_loop() {
      for (;;) {
        std::string line;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return !outbound.empty() || closing; });
          if (outbound.empty()) break;
          line = std::move(outbound.front());
          outbound.pop_front();
        }
        if (!net::send_all(sock.fd(), line)) {
          std::lock_guard lock(mu);
          closing = true;
          outbound.clear();
          break;
        }
      }
      sock.shutdown();
    }
  };

  config::ServerConfig cfg;
  Clock::time_point started = Clock::now();
  std::set<std::string> allow;

  net::Socket listener;
  std::uint16_t bound_port = 0;
  std::thread acceptor;

  // graph writer
  WorkQueue writer_q;
  std::thread writer;
  DynamicSceneGraph graph;
  std::map<NodeId, std::set<std::string>> passive_refs;  // passive node -> referencing sensors
  std::set<NodeId> operator_nodes;
  std::atomic<std::uint64_t> version{0};
  std::atomic<TimestampUs> data_clock{0};

  // sessions
  mutable std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> live;
  std::vector<std::shared_ptr<Session>> all_sessions;

  // fusion
  std::thread fusion;
  std::mutex engine_mu;
  FusionEngine engine;
  mutable std::mutex latest_mu;
  std::shared_ptr<const CycleResult> latest;
  std::condition_variable cycle_cv;
  std::uint64_t cycle_version = 0;  // graph version consumed by the latest cycle
  std::uint64_t last_solved_version = std::numeric_limits<std::uint64_t>::max();

  // bridge
  std::unique_ptr<httplib::Server> http;
  std::uint16_t http_port = 0;
  std::thread http_thread;
  std::mutex frame_mu;
  std::condition_variable frame_cv;
  std::string frame;
  std::uint64_t frame_seq = 0;

  // session log
  std::mutex log_mu;
  std::ofstream session_log;

  // metrics
  mutable std::mutex metrics_mu;
  ServerMetrics counters;
  std::vector<double> latencies;
  std::size_t latency_next = 0;

  // lifecycle
  std::atomic<bool> running{false};
  std::atomic<bool> stopping{false};
  std::mutex stop_mu;
  std::condition_variable stop_cv;
  int wake_pipe[2] = {-1, -1};
  bool stopped = false;

  explicit Impl(config::ServerConfig c)
      : cfg(std::move(c)), graph(cfg.graph), engine(cfg.solve) {
    if (cfg.allow_list) allow = read_allow_list(*cfg.allow_list);
    if (::pipe(wake_pipe) != 0) throw Error("cannot create wake pipe");
  }

  ~Impl() {
    for (int fd : wake_pipe) {
      if (fd >= 0) ::close(fd);
    }
  }

  TimestampUs now_us() const {
    if (cfg.clock == config::ClockMode::Data) return data_clock.load();
    return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - started).count();
  }

  template <typename F>
  void count(F fn) {
    std::lock_guard lock(metrics_mu);
    fn(counters);
  }

  void log_record(const json& j) {
    if (!session_log.is_open()) return;
    const std::string line = j.dump() + "\n";
    std::lock_guard lock(log_mu);
    session_log << line;
  }

  // ---- graph writer operations (run on the writer thread) ----

  void ref_passive(const NodeId& target, const std::string& sensor) {
    if (!graph.has_node(target)) {
      graph.add_node(target);
      ++version;
    }
    passive_refs[target].insert(sensor);
  }

  void drop_sensor(const std::string& sensor) {
    const NodeId id = NodeId::active(sensor);
    if (graph.has_node(id)) graph.remove_node(id);
    for (auto it = passive_refs.begin(); it != passive_refs.end();) {
      it->second.erase(sensor);
      if (it->second.empty()) {
        if (!operator_nodes.contains(it->first) && graph.has_node(it->first)) graph.remove_node(it->first);
        it = passive_refs.erase(it);
      } else {
        ++it;
      }
    }
    ++version;
  }

  // ---- sessions ----

  void accept_loop() {
    while (!stopping) {
      std::optional<net::Socket> sock;
      try {
        sock = net::accept_tcp(listener, std::chrono::milliseconds(100));
      } catch (const Error& e) {
        log::warn("accept_failed", {{"detail", e.what()}});
        continue;
      }
      prune_sessions();
      if (!sock) continue;
      auto s = std::make_shared<Session>();
      s->sock = std::move(*sock);
      count([](ServerMetrics& m) { ++m.sessions_opened; });
      std::lock_guard lock(sessions_mu);
      if (stopping) {
        s->sock.close();
        break;
      }
      s->sender = std::thread([s] { s->send_loop(); });
      s->reader = std::thread([this, s] { read_loop(s); });
      all_sessions.push_back(s);
    }
  }

  void prune_sessions() {
    std::vector<std::shared_ptr<Session>> done;
    {
      std::lock_guard lock(sessions_mu);
      for (auto it = all_sessions.begin(); it != all_sessions.end();) {
        if ((*it)->finished) {
          done.push_back(*it);
          it = all_sessions.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& s : done) {
      if (s->reader.joinable()) s->reader.join();
    }
  }

  void read_loop(const std::shared_ptr<Session>& s) {
    net::LineReader reader(s->sock.fd());
    std::string line;
    bool registered = false;
    for (;;) {
      const auto st = reader.read_line(line);
      if (st == net::LineReader::Status::Closed) break;
      if (st == net::LineReader::Status::TooLong) {
        count([](ServerMetrics& m) { ++m.protocol_errors; });
        s->close_after_flush(error_line("line_too_long", "message exceeds the line limit"));
        break;
      }
      if (line.find_first_not_of(" \t") == std::string::npos) continue;

      protocol::Message msg;
      try {
        msg = protocol::parse_line(line);
      } catch (const ProtocolError& e) {
        count([](ServerMetrics& m) { ++m.protocol_errors; });
        log::info("protocol_error", {{"sensor", s->sensor}, {"detail", e.what()}});
        s->close_after_flush(error_line("bad_message", e.what()));
        break;
      }

      if (auto* h = std::get_if<protocol::Hello>(&msg)) {
        if (registered) {
          s->close_after_flush(error_line("duplicate_hello", "session already registered"));
          break;
        }
        if (!register_session(s, *h)) break;
        registered = true;
        continue;
      }
      if (std::holds_alternative<protocol::Bye>(msg)) break;
      if (!registered) {
        count([](ServerMetrics& m) { ++m.protocol_errors; });
        s->close_after_flush(error_line("hello_required", "send hello before anything else"));
        break;
      }
      if (auto* m = std::get_if<protocol::Measurement>(&msg)) {
        if (m->sensor_id != s->sensor) {
          count([](ServerMetrics& c) { ++c.protocol_errors; });
          s->close_after_flush(error_line("sensor_mismatch", "measurement sensor_id differs from the session"));
          break;
        }
        handle_measurement(s, std::move(*m));
      } else if (auto* q = std::get_if<protocol::Query>(&msg)) {
        s->enqueue(protocol::to_line(answer_query(s->sensor, q->target)));
      } else if (auto* u = std::get_if<protocol::UnknownMessage>(&msg)) {
        s->enqueue(error_line("unknown_type", "unknown message type \"" + u->type + "\""));
      } else {
        s->enqueue(error_line("unexpected_message", "message type not accepted from sensors"));
      }
    }
    end_session(s, registered);
  }

  bool register_session(const std::shared_ptr<Session>& s, const protocol::Hello& h) {
    {
      std::lock_guard lock(sessions_mu);
      if (live.contains(h.sensor_id)) {
        s->close_after_flush(error_line("duplicate_sensor", "a session for " + h.sensor_id + " is already live"));
        return false;
      }
      s->sensor = h.sensor_id;
      s->default_info = protocol::default_info_for(h.sensor_type);
      live[h.sensor_id] = s;
    }
    std::vector<NodeId> declared;
    for (const auto& t : h.targets) {
      if (allow.empty() || allow.contains(t)) declared.push_back(NodeId::passive(t));
    }
    const std::string sensor = h.sensor_id;
    writer_q.call([this, sensor, declared] {
      const NodeId id = NodeId::active(sensor);
      if (!graph.has_node(id)) graph.add_node(id);
      for (const auto& t : declared) ref_passive(t, sensor);
      ++version;
    }).wait();
    s->enqueue(protocol::to_line(protocol::Welcome{now_us()}));
    log::info("session_open", {{"sensor", sensor}, {"sensor_type", h.sensor_type}});
    return true;
  }

  void handle_measurement(const std::shared_ptr<Session>& s, protocol::Measurement m) {
    if (!allow.empty() && !allow.contains(m.target)) {
      count([](ServerMetrics& c) { ++c.rejected; });
      s->enqueue(error_line("target_not_allowed", "target " + m.target + " is not on the allow-list"));
      return;
    }
    log_record(protocol::measurement_to_json(m));
    std::weak_ptr<Session> weak = s;
    writer_q.post([this, weak, m = std::move(m), info = s->default_info] {
      const NodeId target = NodeId::passive(m.target);
      if (!graph.has_node(NodeId::active(m.sensor_id))) return;  // session already gone
      if (!graph.has_node(target) && cfg.auto_register) ref_passive(target, m.sensor_id);
      if (graph.has_node(target)) passive_refs[target].insert(m.sensor_id);
      try {
        const auto outcome = ingest_measurement(graph, m, info, cfg.auto_register);
        if (outcome == IngestOutcome::Stale) {
          count([](ServerMetrics& c) { ++c.dropped_stale; });
          return;
        }
      } catch (const UnknownTarget& e) {
        count([](ServerMetrics& c) { ++c.rejected; });
        if (auto sp = weak.lock()) sp->enqueue(error_line("unknown_target", e.what()));
        return;
      } catch (const InvalidInfoMatrix& e) {
        count([](ServerMetrics& c) { ++c.rejected; });
        if (auto sp = weak.lock()) sp->enqueue(error_line("invalid_info", e.what()));
        return;
      }
      count([](ServerMetrics& c) { ++c.measurements; });
      TimestampUs prev = data_clock.load();
      while (m.t_us > prev && !data_clock.compare_exchange_weak(prev, m.t_us)) {
      }
      ++version;
    });
  }

  protocol::QueryResult answer_query(const std::string& sensor, const std::string& target) {
    protocol::QueryResult r;
    r.target = target;
    const auto cycle = latest_cycle();
    if (!cycle || !cycle->snapshot) return r;
    const GraphSnapshot& snap = *cycle->snapshot;
    const NodeId sid = NodeId::active(sensor);
    const NodeId tid = NodeId::passive(target);
    if (!snap.contains(sid) || !snap.contains(tid)) return r;
    const pgo::SolveReport* report = cycle->report ? &*cycle->report : nullptr;
    const completion::SearchGraph sg(snap, report);
    const TargetEstimate est = estimate_target(sg, report, sid, tid);
    if (est.lose_track || !est.pose) return r;
    r.lose_track = false;
    r.pose = est.pose;
    r.direct = est.direct;
    r.path = est.path;
    r.age_us = std::max<TimestampUs>(0, now_us() - est.newest_edge_us);
    if (report && report->uncertainties.contains(tid)) r.uncertainty = report->uncertainties.at(tid);
    return r;
  }

  void end_session(const std::shared_ptr<Session>& s, bool registered) {
    if (registered) {
      bool was_live = false;
      {
        std::lock_guard lock(sessions_mu);
        auto it = live.find(s->sensor);
        if (it != live.end() && it->second == s) {
          live.erase(it);
          was_live = true;
        }
      }
      if (was_live) {
        const std::string sensor = s->sensor;
        writer_q.post([this, sensor] { drop_sensor(sensor); });
        log::info("session_closed", {{"sensor", sensor}});
      }
    }
    s->close_after_flush();
    if (s->sender.joinable()) s->sender.join();
    s->sock.close();
    count([](ServerMetrics& m) { ++m.sessions_closed; });
    s->finished = true;
  }

  // ---- fusion loop ----

  void fusion_loop() {
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg.fusion_hz));
    auto next = Clock::now();
    while (!stopping) {
      next += period;
      {
        std::unique_lock lock(stop_mu);
        stop_cv.wait_until(lock, next, [&] { return stopping.load(); });
      }
      if (stopping) break;
      const auto now = Clock::now();
      if (now - next > period) next = now;  // fell behind; do not burst
      run_cycle();
    }
  }

  void run_cycle() {
    const auto t0 = Clock::now();
    auto fut = writer_q.call([this] {
      const TimestampUs t = now_us();
      return std::make_pair(graph.snapshot(t), version.load());
    });
    if (fut.wait_for(std::chrono::seconds(5)) != std::future_status::ready) return;
    auto [snap, ver] = fut.get();

    if (cfg.clock == config::ClockMode::Data && ver == last_solved_version) {
      count([](ServerMetrics& m) { ++m.skipped_cycles; });
      mark_cycle(ver);
      return;
    }
    last_solved_version = ver;

    std::vector<std::pair<NodeId, std::shared_ptr<Session>>> targets;
    {
      std::lock_guard lock(sessions_mu);
      for (const auto& [name, s] : live) targets.emplace_back(NodeId::active(name), s);
    }
    std::vector<NodeId> sensors;
    for (const auto& [id, s] : targets) sensors.push_back(id);

    auto result = std::make_shared<CycleResult>();
    {
      std::lock_guard lock(engine_mu);
      *result = engine.run_cycle(std::move(snap), sensors);
    }
    std::uint64_t sent = 0;
    for (const auto& [id, s] : targets) {
      if (!result->snapshot->contains(id)) continue;
      const protocol::PoseUpdate update = result->update_for(id);
      json j = protocol::to_json(update);
      std::string line = j.dump() + "\n";
      s->enqueue(std::move(line));
      ++sent;
      if (session_log.is_open()) {
        j["sensor_id"] = id.name;
        log_record(j);
      }
    }
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

    json payload{{"snapshot", protocol::snapshot_to_json(*result->snapshot)},
                 {"report", result->report ? protocol::report_to_json(*result->report) : json(nullptr)}};
    {
      std::lock_guard lock(metrics_mu);
      ++counters.cycles;
      counters.updates_sent += sent;
      if (!result->solve_error.empty()) ++counters.solve_failures;
      if (latencies.size() < kLatencyWindow) {
        latencies.push_back(ms);
      } else {
        latencies[latency_next] = ms;
        latency_next = (latency_next + 1) % kLatencyWindow;
      }
    }
    if (!result->solve_error.empty()) log::warn("solve_failed", {{"detail", result->solve_error}});
    {
      std::lock_guard lock(latest_mu);
      latest = std::move(result);
    }
    {
      std::lock_guard lock(frame_mu);
      frame = payload.dump();
      ++frame_seq;
    }
    frame_cv.notify_all();
    mark_cycle(ver);
  }

  void mark_cycle(std::uint64_t ver) {
    {
      std::lock_guard lock(latest_mu);
      cycle_version = std::max(cycle_version, ver);
    }
    cycle_cv.notify_all();
  }

  std::shared_ptr<const CycleResult> latest_cycle() const {
    std::lock_guard lock(latest_mu);
    return latest;
  }

  // ---- operator bridge ----

  void start_bridge() {
    if (cfg.operator_listen.empty()) return;
    const auto ep = net::Endpoint::parse(cfg.operator_listen);
    http = std::make_unique<httplib::Server>();
    // SO_REUSEPORT (the library default) would let a second server share the port silently.
    http->set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto send_json = [](httplib::Response& res, int status, const json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json");
      res.set_header("Access-Control-Allow-Origin", "*");
    };
    auto send_error = [send_json](httplib::Response& res, int status, const std::string& detail) {
      send_json(res, status, json{{"error", detail}});
    };

    http->Get("/graph", [this, send_json](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, protocol::snapshot_to_json(owner_snapshot()));
    });
    http->Get("/report", [this, send_json](const httplib::Request&, httplib::Response& res) {
      const auto cycle = latest_cycle();
      send_json(res, 200, cycle && cycle->report ? protocol::report_to_json(*cycle->report) : json(nullptr));
    });
    http->Get("/metrics", [this, send_json](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, metrics().to_json());
    });
    http->Post("/nodes", [this, send_json, send_error](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      std::string name;
      if (!body.is_discarded() && body.is_object()) {
        if (body.contains("name") && body["name"].is_string()) name = body["name"].get<std::string>();
        if (body.contains("id") && body["id"].is_string()) name = body["id"].get<std::string>();
      }
      if (name.rfind("passive:", 0) == 0) name = name.substr(8);
      if (name.empty()) return send_error(res, 400, "body must be {\"name\": \"<passive node>\"}");
      try {
        add_passive(name);
        send_json(res, 201, json{{"id", NodeId::passive(name).str()}});
      } catch (const DuplicateNode& e) {
        send_error(res, 409, e.what());
      } catch (const Error& e) {
        send_error(res, 400, e.what());
      }
    });
    http->Delete(R"(/nodes/([^/]+))", [this, send_json, send_error](const httplib::Request& req,
                                                                     httplib::Response& res) {
      try {
        remove_node(req.matches[1]);
        send_json(res, 200, json{{"removed", std::string(req.matches[1])}});
      } catch (const UnknownNode& e) {
        send_error(res, 404, e.what());
      }
    });
    http->Post(R"(/anchor/([^/]+))", [this, send_json, send_error](const httplib::Request& req,
                                                                    httplib::Response& res) {
      std::string id = req.matches[1];
      if (id.rfind("active:", 0) == 0) id = id.substr(7);
      try {
        force_anchor(id);
        send_json(res, 200, json{{"anchor", id}});
      } catch (const UnknownNode& e) {
        send_error(res, 404, e.what());
      } catch (const IneligibleAnchor& e) {
        send_error(res, 409, e.what());
      }
    });
    http->Get("/events", [this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Cache-Control", "no-cache");
      res.set_header("Access-Control-Allow-Origin", "*");
      auto last = std::make_shared<std::uint64_t>(0);
      res.set_chunked_content_provider("text/event-stream", [this, last](std::size_t, httplib::DataSink& sink) {
        std::string out;
        {
          std::unique_lock lock(frame_mu);
          frame_cv.wait_for(lock, std::chrono::seconds(1), [&] { return stopping.load() || frame_seq != *last; });
          if (stopping) return false;
          if (frame_seq != *last) {
            *last = frame_seq;
            out = "id: " + std::to_string(frame_seq) + "\ndata: " + frame + "\n\n";
          }
        }
        if (out.empty()) out = ": keepalive\n\n";
        return sink.write(out.data(), out.size());
      });
    });

    bool ok = false;
    if (ep.port == 0) {
      const int p = http->bind_to_any_port(ep.host);
      ok = p > 0;
      http_port = static_cast<std::uint16_t>(std::max(p, 0));
    } else {
      ok = http->bind_to_port(ep.host, ep.port);
      http_port = ep.port;
    }
    if (!ok) throw BindFailure("cannot bind operator bridge on " + cfg.operator_listen);
    http_thread = std::thread([this] { http->listen_after_bind(); });
    http->wait_until_ready();
  }

  GraphSnapshot owner_snapshot() {
    return writer_q.call([this] { return graph.snapshot(now_us()); }).get();
  }

  void add_passive(const std::string& name) {
    writer_q.call([this, name] {
      const NodeId id = NodeId::passive(name);
      graph.add_node(id);  // DuplicateNode
      operator_nodes.insert(id);
      ++version;
    }).get();
  }

  void remove_node(const std::string& raw) {
    std::optional<NodeId> id;
    if (raw.rfind("active:", 0) == 0) id = NodeId::active(raw.substr(7));
    if (raw.rfind("passive:", 0) == 0) id = NodeId::passive(raw.substr(8));
    if (!id) {
      id = writer_q.call([this, raw]() -> std::optional<NodeId> {
        if (graph.has_node(NodeId::active(raw))) return NodeId::active(raw);
        if (graph.has_node(NodeId::passive(raw))) return NodeId::passive(raw);
        return std::nullopt;
      }).get();
      if (!id) throw UnknownNode("no such node: " + raw);
    }
    if (id->is_active()) {
      std::shared_ptr<Session> s;
      {
        std::lock_guard lock(sessions_mu);
        if (auto it = live.find(id->name); it != live.end()) s = it->second;
      }
      if (s) {
        // The reader notices the closed socket and deregisters the sensor.
        s->close_after_flush(protocol::to_line(protocol::Bye{}));
        writer_q.call([] {}).wait();
        return;
      }
    }
    writer_q.call([this, id = *id] {
      if (!graph.has_node(id)) throw UnknownNode("no such node: " + id.str());
      if (id.is_active()) {
        drop_sensor(id.name);
      } else {
        graph.remove_node(id);
        passive_refs.erase(id);
        operator_nodes.erase(id);
        ++version;
      }
    }).get();
  }

  void force_anchor(const std::string& sensor) {
    const GraphSnapshot snap = owner_snapshot();
    std::lock_guard lock(engine_mu);
    engine.force_anchor(snap, NodeId::active(sensor));
  }

  ServerMetrics metrics() const {
    std::lock_guard lock(metrics_mu);
    ServerMetrics m = counters;
    {
      std::lock_guard slock(sessions_mu);
      m.live_sessions = live.size();
    }
    m.latency_samples = latencies.size();
    if (!latencies.empty()) {
      std::vector<double> v = latencies;
      std::sort(v.begin(), v.end());
      auto pct = [&](double p) {
        const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) ;
        return v[std::min(v.size() - 1, k == 0 ? 0 : k - 1)];
      };
      m.latency_p50_ms = pct(0.50);
      m.latency_p99_ms = pct(0.99);
      m.latency_max_ms = v.back();
      double sum = 0.0;
      for (double x : v) sum += x;
      m.latency_mean_ms = sum / static_cast<double>(v.size());
    }
    return m;
  }

  // ---- lifecycle ----

  void start() {
    if (running) return;
    if (cfg.log_path) {
      session_log.open(*cfg.log_path, std::ios::out | std::ios::trunc);
      if (!session_log) throw ConfigError("cannot open session log " + cfg.log_path->string());
    }
    listener = net::listen_tcp(net::Endpoint::parse(cfg.listen));
    bound_port = net::local_port(listener);
    writer = std::thread([this] { writer_q.run(); });
    try {
      start_bridge();
    } catch (...) {
      writer_q.close();
      writer.join();
      throw;
    }
    running = true;
    acceptor = std::thread([this] { accept_loop(); });
    fusion = std::thread([this] { fusion_loop(); });
    log::info("server_started", {{"listen", cfg.listen}, {"port", bound_port}, {"operator_port", http_port}});
  }

  void stop() {
    if (!running || stopped) return;
    stopped = true;
    stopping = true;
    stop_cv.notify_all();
    frame_cv.notify_all();
    if (acceptor.joinable()) acceptor.join();
    if (fusion.joinable()) fusion.join();

    std::vector<std::shared_ptr<Session>> sessions;
    {
      std::lock_guard lock(sessions_mu);
      sessions = all_sessions;
    }
    const std::string bye = protocol::to_line(protocol::Bye{});
    for (auto& s : sessions) s->close_after_flush(bye);
    for (auto& s : sessions) {
      if (s->reader.joinable()) s->reader.join();
    }
    if (http) {
      http->stop();
      if (http_thread.joinable()) http_thread.join();
    }
    writer_q.close();
    if (writer.joinable()) writer.join();
    listener.close();
    if (session_log.is_open()) session_log.close();
    running = false;
    log::info("server_stopped");
  }
};

FusionServer::FusionServer(config::ServerConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

FusionServer::~FusionServer() { stop(); }

void FusionServer::start() { impl_->start(); }
void FusionServer::stop() { impl_->stop(); }

void FusionServer::request_stop() {
  const char c = 'x';
  [[maybe_unused]] auto n = ::write(impl_->wake_pipe[1], &c, 1);
}

void FusionServer::wait() {
  char c;
  while (::read(impl_->wake_pipe[0], &c, 1) < 0 && errno == EINTR) {
  }
  stop();
}

std::uint16_t FusionServer::port() const { return impl_->bound_port; }
std::uint16_t FusionServer::operator_port() const { return impl_->http_port; }
TimestampUs FusionServer::now_us() const { return impl_->now_us(); }
GraphSnapshot FusionServer::snapshot() { return impl_->owner_snapshot(); }
std::shared_ptr<const CycleResult> FusionServer::latest_cycle() const { return impl_->latest_cycle(); }
ServerMetrics FusionServer::metrics() const { return impl_->metrics(); }

std::vector<std::string> FusionServer::live_sensors() const {
  std::lock_guard lock(impl_->sessions_mu);
  std::vector<std::string> out;
  for (const auto& [name, s] : impl_->live) out.push_back(name);
  return out;
}

bool FusionServer::wait_settled(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  auto fut = impl_->writer_q.call([this] { return impl_->version.load(); });
  if (fut.wait_until(deadline) != std::future_status::ready) return false;
  const std::uint64_t target = fut.get();
  std::unique_lock lock(impl_->latest_mu);
  return impl_->cycle_cv.wait_until(lock, deadline, [&] { return impl_->cycle_version >= target; });
}

void FusionServer::add_passive(const std::string& name) { impl_->add_passive(name); }
void FusionServer::remove_node(const std::string& id) { impl_->remove_node(id); }
void FusionServer::force_anchor(const std::string& sensor) { impl_->force_anchor(sensor); }

}  // namespace scenefuse
