#include <doctest.h>

#include "scenefuse/errors.hpp"
#include "scenefuse/protocol.hpp"

using namespace scenefuse;
using namespace scenefuse::protocol;

TEST_SUITE("protocol") {
  TEST_CASE("every message type round trips") {
    const Pose p = Pose::from_translation(0.1, -0.2, 0.3);
    Measurement m{"ndi", "pointer", 123456789, p, false, Vector6d::Constant(4.0)};
    PoseEntry e{"pointer", p, true, Vector6d::Constant(1e-6), false};
    PoseEntry lost{"probe", std::nullopt, false, Vector6d::Zero(), true};
    QueryResult qr{"pointer", p, false, Vector6d::Constant(2e-6), {"ndi", "probe", "pointer"}, 1500, false};
    const std::vector<Message> msgs{Hello{"ndi", "ots", {"pointer", "probe"}},
                                    Welcome{42},
                                    m,
                                    PoseUpdate{77, {e, lost}},
                                    Query{"pointer"},
                                    qr,
                                    Bye{},
                                    ErrorMessage{"bad_message", "nope"}};
    for (const auto& msg : msgs) {
      const std::string line = to_line(msg);
      CHECK(line.back() == '\n');
      CHECK(line.find('\n') == line.size() - 1);
      const Message back = parse_line(line);
      CHECK(back.index() == msg.index());
      CHECK(to_json(back) == to_json(msg));
    }
  }

  TEST_CASE("wire field names") {
    const json h = to_json(Hello{"a", "hmd", {"x"}});
    CHECK(h == json::parse(R"({"type":"hello","sensor_id":"a","sensor_type":"hmd","targets":["x"]})"));
    const json mj = to_json(Measurement{"a", "x", 5, Pose(), true, std::nullopt});
    CHECK(mj["type"] == "meas");
    CHECK(mj["pose"] == json::array({0, 0, 0, 1, 0, 0, 0}));
    CHECK_FALSE(mj.contains("info_diag"));
    CHECK(to_json(Bye{}) == json{{"type", "bye"}});
    const json u = to_json(PoseUpdate{9, {}});
    CHECK(u["type"] == "update");
    CHECK(u["solve_t_us"] == 9);
    CHECK(to_json(QueryResult{"x", std::nullopt, false, std::nullopt, {}, 0, true})["type"] == "result");
  }

  TEST_CASE("unknown fields are ignored, unknown types reported") {
    const auto m = parse_line(R"({"type":"query","target":"x","extra":[1,2]})");
    CHECK(std::get<Query>(m).target == "x");
    const auto u = parse_line(R"({"type":"teleport","to":"mars"})");
    CHECK(std::get<UnknownMessage>(u).type == "teleport");
  }

  TEST_CASE("malformed input is a protocol error") {
    for (const char* bad : {"{not json", "[]", "42", R"({"no_type":1})", R"({"type":7})",
                            R"({"type":"meas","sensor_id":"a","target":"x","t_us":1.5,"pose":[0,0,0,1,0,0,0],"status":true})",
                            R"({"type":"meas","sensor_id":"a","target":"x","t_us":1,"pose":[0,0,0,1,0,0],"status":true})",
                            R"({"type":"meas","sensor_id":"a","target":"x","t_us":1,"pose":[0,0,0,0,0,0,0],"status":true})",
                            R"({"type":"meas","sensor_id":"a","target":"x","t_us":1,"pose":[0,0,0,1,0,0,0],"status":"yes"})",
                            R"({"type":"meas","sensor_id":"a","target":"x","t_us":1,"pose":[0,0,0,1,0,0,0],"status":true,"info_diag":[1,2]})",
                            R"({"type":"hello","sensor_id":"a","sensor_type":"x","targets":"t"})"}) {
      CHECK_THROWS_AS(parse_line(bad), ProtocolError);
    }
  }

  TEST_CASE("poses are canonicalised") {
    const Pose p = pose_from_json(json::array({1, 2, 3, -2, 0, 0, 0}));
    CHECK(p.rotation().w() == doctest::Approx(1.0));
    const json j = pose_to_json(Pose(Eigen::Quaterniond(-0.6, 0.8, 0, 0), Eigen::Vector3d::Zero()));
    CHECK(j[3].get<double>() >= 0.0);
  }

  TEST_CASE("default weights per sensor type") {
    const InfoMatrix ots = default_info_for("ots");
    const InfoMatrix hmd = default_info_for("hmd");
    CHECK(ots(0, 0) > hmd(0, 0));
    CHECK(ots(5, 5) > hmd(5, 5));
    CHECK(default_info_for("other") == InfoMatrix::Identity());
    CHECK(is_valid_info(ots));
  }

  TEST_CASE("snapshot export") {
    DynamicSceneGraph g;
    g.add_node(NodeId::active("s"));
    g.add_node(NodeId::passive("t"));
    g.upsert_measurement({NodeId::active("s"), NodeId::passive("t"), Pose(), 5, true, InfoMatrix::Identity() * 2});
    const json j = snapshot_to_json(g.snapshot(5));
    CHECK(j["active"] == json::array({"s"}));
    CHECK(j["passive"] == json::array({"t"}));
    REQUIRE(j["edges"].size() == 1);
    CHECK(j["edges"][0]["sensor"] == "s");
    CHECK(j["edges"][0]["t_us"] == 5);
    CHECK(j["edges"][0]["info_diag"][0] == 2.0);
  }
}
