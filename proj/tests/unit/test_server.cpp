#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "scenefuse/client.hpp"
#include "scenefuse/errors.hpp"
#include "scenefuse/server.hpp"

// after Eigen: resolv.h defines a `res` macro
#include <httplib.h>

using namespace scenefuse;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

config::ServerConfig local_config() {
  config::ServerConfig cfg;
  cfg.listen = "127.0.0.1:0";
  cfg.operator_listen = "127.0.0.1:0";
  cfg.fusion_hz = 100.0;
  cfg.clock = config::ClockMode::Data;
  return cfg;
}

struct Harness {
  FusionServer server;
  explicit Harness(config::ServerConfig cfg = local_config()) : server(std::move(cfg)) { server.start(); }
  std::string address() const { return "127.0.0.1:" + std::to_string(server.port()); }
  std::unique_ptr<SensorClient> connect(const std::string& sensor, std::vector<std::string> targets = {}) {
    return std::make_unique<SensorClient>(address(), protocol::Hello{sensor, "sim", std::move(targets)});
  }
  void settle() { REQUIRE(server.wait_settled(5s)); }
};

template <class Pred>
bool eventually(Pred pred, std::chrono::milliseconds timeout = 5s) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return pred();
}

// Next message of type T, skipping everything else.
template <class T>
std::optional<T> next_of(SensorClient& c, std::chrono::milliseconds timeout = 5s) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    auto msg = c.receive(50ms);
    if (msg && std::holds_alternative<T>(*msg)) return std::get<T>(*msg);
  }
  return std::nullopt;
}

protocol::Measurement meas(const std::string& s, const std::string& t, TimestampUs at, const Pose& p = Pose(),
                           bool status = true) {
  return {s, t, at, p, status, std::nullopt};
}

bool has_passive(const GraphSnapshot& snap, const std::string& name) {
  return snap.contains(NodeId::passive(name));
}

}  // namespace

TEST_SUITE("server") {
  TEST_CASE("hello registers nodes and disconnect removes them") {
    Harness h;
    auto c = h.connect("s1", {"a", "b"});
    h.settle();
    auto snap = h.server.snapshot();
    CHECK(snap.contains(NodeId::active("s1")));
    CHECK(has_passive(snap, "a"));
    CHECK(has_passive(snap, "b"));
    CHECK(h.server.live_sensors() == std::vector<std::string>{"s1"});
    c->kill();
    CHECK(eventually([&] { return h.server.snapshot().empty(); }));
    CHECK(h.server.live_sensors().empty());
  }

  TEST_CASE("measurements produce pose updates") {
    Harness h;
    auto c = h.connect("s1");
    c->send(meas("s1", "a", 1000, Pose::from_translation(0.1, 0, 0)));
    c->send(meas("s1", "b", 1000, Pose::from_translation(0, 0.2, 0)));
    h.settle();
    std::optional<protocol::PoseUpdate> u;
    for (int k = 0; k < 20 && !(u && u->poses.size() == 2); ++k) u = next_of<protocol::PoseUpdate>(*c);
    REQUIRE(u);
    REQUIRE(u->poses.size() == 2);
    CHECK(u->solve_t_us == 1000);
    for (const auto& e : u->poses) {
      CHECK(e.direct);
      CHECK_FALSE(e.lose_track);
    }
    CHECK(u->poses[1].pose->translation().y() == doctest::Approx(0.2));
    CHECK(h.server.metrics().measurements == 2);
  }

  TEST_CASE("a malformed line closes only the offending session") {
    Harness h;
    auto good = h.connect("good");
    net::Socket raw = net::connect_tcp(net::Endpoint::parse(h.address()));
    net::LineReader reader(raw.fd());
    REQUIRE(net::send_all(raw.fd(), protocol::to_line(protocol::Hello{"bad", "sim", {}})));
    REQUIRE(net::send_all(raw.fd(), "{this is not json\n"));
    std::string line;
    bool got_error = false;
    for (;;) {
      const auto st = reader.read_line(line, 5000ms);
      if (st != net::LineReader::Status::Line) {
        CHECK(st == net::LineReader::Status::Closed);
        break;
      }
      const auto msg = protocol::parse_line(line);
      if (const auto* e = std::get_if<protocol::ErrorMessage>(&msg)) {
        got_error = true;
        CHECK(e->code == "bad_message");
      }
    }
    CHECK(got_error);
    CHECK(eventually([&] { return h.server.live_sensors() == std::vector<std::string>{"good"}; }));
    CHECK(h.server.metrics().protocol_errors >= 1);
    good->send(meas("good", "a", 10));
    CHECK(next_of<protocol::PoseUpdate>(*good));
  }

  TEST_CASE("measurements before hello are refused") {
    Harness h;
    net::Socket raw = net::connect_tcp(net::Endpoint::parse(h.address()));
    net::LineReader reader(raw.fd());
    REQUIRE(net::send_all(raw.fd(), protocol::to_line(meas("x", "a", 1))));
    std::string line;
    REQUIRE(reader.read_line(line, 5000ms) == net::LineReader::Status::Line);
    CHECK(std::get<protocol::ErrorMessage>(protocol::parse_line(line)).code == "hello_required");
    CHECK(h.server.snapshot().empty());
  }

  TEST_CASE("unknown message types keep the session open") {
    Harness h;
    auto c = h.connect("s1");
    c->send_raw("{\"type\":\"teleport\",\"to\":\"mars\"}\n");
    auto e = next_of<protocol::ErrorMessage>(*c);
    REQUIRE(e);
    CHECK(e->code == "unknown_type");
    c->send(meas("s1", "a", 5));
    CHECK(next_of<protocol::PoseUpdate>(*c));
  }

  TEST_CASE("duplicate sensor ids are refused") {
    Harness h;
    auto c = h.connect("s1");
    CHECK_THROWS_AS(h.connect("s1"), ProtocolError);
    CHECK(h.server.live_sensors() == std::vector<std::string>{"s1"});
  }

  TEST_CASE("stale measurements are dropped and counted") {
    Harness h;
    auto c = h.connect("s1");
    c->send(meas("s1", "a", 2000));
    c->send(meas("s1", "a", 1000));
    h.settle();
    const auto m = h.server.metrics();
    CHECK(m.measurements == 1);
    CHECK(m.dropped_stale == 1);
    CHECK(h.server.snapshot().edge(NodeId::active("s1"), NodeId::passive("a"))->t_us == 2000);
  }

  TEST_CASE("queries report direct, indirect and lost targets") {
    Harness h;
    auto c1 = h.connect("s1");
    auto c2 = h.connect("s2");
    const Pose a = Pose::from_translation(0.3, 0, 0);
    const Pose b = Pose::from_translation(0, 0.4, 0);
    c1->send(meas("s1", "a", 1000, a));
    c1->send(meas("s1", "b", 1000, b));
    c2->send(meas("s2", "b", 1000, b));
    c2->send(meas("s2", "a", 1000, a, false));
    h.settle();

    c2->send(protocol::Query{"b"});
    auto qb = next_of<protocol::QueryResult>(*c2);
    REQUIRE(qb);
    CHECK(qb->direct);
    CHECK_FALSE(qb->lose_track);
    CHECK(qb->path == std::vector<std::string>{"s2", "b"});

    c2->send(protocol::Query{"a"});
    auto qa = next_of<protocol::QueryResult>(*c2);
    REQUIRE(qa);
    CHECK_FALSE(qa->direct);
    CHECK_FALSE(qa->lose_track);
    REQUIRE(qa->pose);
    CHECK((a.inverse() * *qa->pose).translation().norm() < 1e-6);
    CHECK(qa->path.front() == "s2");
    CHECK(qa->path.back() == "a");

    c2->send(protocol::Query{"nobody"});
    auto qn = next_of<protocol::QueryResult>(*c2);
    REQUIRE(qn);
    CHECK(qn->lose_track);
    CHECK_FALSE(qn->pose);
  }

  TEST_CASE("operator bridge") {
    Harness h;
    httplib::Client http("127.0.0.1", h.server.operator_port());
    http.set_read_timeout(5, 0);

    auto g = http.Get("/graph");
    REQUIRE(g);
    CHECK(g->status == 200);
    const json graph = json::parse(g->body);
    CHECK(graph["active"].empty());
    CHECK(graph["edges"].empty());

    auto r = http.Get("/report");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(json::parse(r->body).is_null());

    auto created = http.Post("/nodes", R"({"name":"tool"})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(json::parse(created->body)["id"] == "passive:tool");
    CHECK(http.Post("/nodes", R"({"name":"tool"})", "application/json")->status == 409);
    CHECK(http.Post("/nodes", R"({"nom":"x"})", "application/json")->status == 400);
    CHECK(http.Post("/nodes", "garbage", "text/plain")->status == 400);
    CHECK(has_passive(h.server.snapshot(), "tool"));

    CHECK(http.Delete("/nodes/nothing")->status == 404);
    CHECK(http.Delete("/nodes/tool")->status == 200);
    CHECK_FALSE(has_passive(h.server.snapshot(), "tool"));

    auto c = h.connect("s1");
    h.settle();
    CHECK(http.Post("/anchor/s1", "", "application/json")->status == 409);
    CHECK(http.Post("/anchor/ghost", "", "application/json")->status == 404);
    c->send(meas("s1", "a", 100));
    h.settle();
    CHECK(http.Post("/anchor/s1", "", "application/json")->status == 200);

    auto m = http.Get("/metrics");
    REQUIRE(m);
    const json metrics = json::parse(m->body);
    CHECK(metrics["live_sessions"] == 1);
    CHECK(metrics["cycles"].get<int>() >= 1);
    CHECK(metrics.contains("cycle_latency_ms"));

    // removing a live sensor ends its session with BYE
    CHECK(http.Delete("/nodes/s1")->status == 200);
    CHECK(next_of<protocol::Bye>(*c));
    CHECK(eventually([&] { return h.server.live_sensors().empty(); }));
  }

  TEST_CASE("event stream pushes cycle frames") {
    Harness h;
    auto c = h.connect("s1");
    std::string received;
    std::thread feeder([&] {
      for (int k = 1; k <= 40 && received.find("data: ") == std::string::npos; ++k) {
        c->send(meas("s1", "a", k * 1000));
        std::this_thread::sleep_for(20ms);
      }
    });
    httplib::Client http("127.0.0.1", h.server.operator_port());
    http.set_read_timeout(5, 0);
    auto res = http.Get("/events", [&](const char* data, std::size_t n) {
      received.append(data, n);
      return received.find("\n\n", received.find("data: ")) == std::string::npos;
    });
    feeder.join();
    const auto at = received.find("data: ");
    REQUIRE(at != std::string::npos);
    const auto end = received.find('\n', at);
    const json frame = json::parse(received.substr(at + 6, end - at - 6));
    CHECK(frame.contains("snapshot"));
    CHECK(frame.contains("report"));
    CHECK(frame["snapshot"]["active"] == json::array({"s1"}));
  }

  TEST_CASE("stop says goodbye to every session") {
    Harness h;
    auto c = h.connect("s1");
    h.settle();
    h.server.stop();
    CHECK(next_of<protocol::Bye>(*c, 2s));
    h.server.stop();  // idempotent
  }

  TEST_CASE("allow-list restricts targets") {
    const auto path = std::filesystem::temp_directory_path() / "scenefuse_allow_test.txt";
    {
      std::ofstream f(path);
      f << "# tools\na\n";
    }
    auto cfg = local_config();
    cfg.allow_list = path;
    Harness h(cfg);
    auto c = h.connect("s1", {"a", "b"});
    h.settle();
    auto snap = h.server.snapshot();
    CHECK(has_passive(snap, "a"));
    CHECK_FALSE(has_passive(snap, "b"));
    c->send(meas("s1", "b", 10));
    auto e = next_of<protocol::ErrorMessage>(*c);
    REQUIRE(e);
    CHECK(e->code == "target_not_allowed");
    CHECK(h.server.metrics().rejected == 1);
    std::filesystem::remove(path);
  }

  TEST_CASE("binding an occupied port fails") {
    Harness h;
    auto cfg = local_config();
    cfg.listen = h.address();
    FusionServer other(cfg);
    CHECK_THROWS_AS(other.start(), BindFailure);
    cfg = local_config();
    cfg.operator_listen = "127.0.0.1:" + std::to_string(h.server.operator_port());
    FusionServer third(cfg);
    CHECK_THROWS_AS(third.start(), BindFailure);
  }

  TEST_CASE("driving an empty log does nothing") {
    Harness h;
    const auto r = drive(h.address(), {});
    CHECK(r.records.empty());
    CHECK(r.ok());
  }

  TEST_CASE("a crashed sensor does not disturb the others") {
    Harness h;
    auto c1 = h.connect("s1");
    auto c2 = h.connect("s2");
    c1->send(meas("s1", "a", 100));
    c2->send(meas("s2", "a", 100));
    h.settle();
    c2->kill();
    CHECK(eventually([&] { return h.server.live_sensors() == std::vector<std::string>{"s1"}; }));
    c1->send(meas("s1", "a", 200));
    h.settle();
    std::optional<protocol::PoseUpdate> u;
    for (int k = 0; k < 50 && !(u && u->solve_t_us == 200); ++k) u = next_of<protocol::PoseUpdate>(*c1);
    REQUIRE(u);
    CHECK(u->solve_t_us == 200);
    REQUIRE(u->poses.size() == 1);
    CHECK(u->poses[0].direct);
    CHECK_FALSE(h.server.snapshot().contains(NodeId::active("s2")));
  }
}
