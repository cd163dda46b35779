#include <doctest.h>

#include "oracles/fixtures.hpp"
#include "scenefuse/errors.hpp"
#include "scenefuse/fusion.hpp"
#include "scenefuse/replay.hpp"

using namespace scenefuse;
using fixture::Rng;

namespace {

const NodeId s1 = NodeId::active("s1"), s2 = NodeId::active("s2");
const NodeId t1 = NodeId::passive("t1"), t2 = NodeId::passive("t2"), t3 = NodeId::passive("t3");

protocol::Measurement meas(const std::string& s, const std::string& t, TimestampUs at, const Pose& p = Pose(),
                           bool status = true) {
  protocol::Measurement m;
  m.sensor_id = s;
  m.target = t;
  m.t_us = at;
  m.pose = p;
  m.status = status;
  return m;
}

double gap(const Pose& a, const Pose& b) {
  const Pose d = a.inverse() * b;
  return std::max(d.translation().norm(), d.angle());
}

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("ingest registers targets and applies weights") {
    DynamicSceneGraph g;
    g.add_node(s1);
    const InfoMatrix def = InfoMatrix::Identity() * 7;
    CHECK_THROWS_AS(ingest_measurement(g, meas("s1", "t1", 10), def, false), UnknownTarget);
    CHECK(ingest_measurement(g, meas("s1", "t1", 10), def, true) == IngestOutcome::Stored);
    CHECK(g.has_node(t1));
    CHECK(g.edges().at({s1, t1}).info == def);

    auto m = meas("s1", "t1", 20);
    m.info_diag = Vector6d::Constant(3.0);
    ingest_measurement(g, m, def, true);
    CHECK(g.edges().at({s1, t1}).info == InfoMatrix::Identity() * 3);

    CHECK(ingest_measurement(g, meas("s1", "t1", 15), def, true) == IngestOutcome::Stale);
    CHECK(g.edges().at({s1, t1}).t_us == 20);

    ingest_measurement(g, meas("s1", "t1", 30, Pose(), false), def, true);
    CHECK(g.edges().at({s1, t1}).info.isZero(0.0));
  }

  TEST_CASE("cycle reports direct, indirect and lost targets") {
    Rng rng(50);
    const auto w = fixture::random_world(rng, 2, 3);
    // s1 sees t1 and t2; s2 sees t2 only; t3 is seen by nobody
    const auto snap = fixture::make_snapshot(
        w, {{s1, t1, true, 0}, {s1, t2, true, 0}, {s2, t2, true, 0}, {s2, t1, false, 0}, {s1, t3, false, 0}});
    FusionEngine engine;
    const auto cycle = engine.run_cycle(snap, {s1, s2, NodeId::active("gone")});
    REQUIRE(cycle.report.has_value());
    CHECK(cycle.estimates.size() == 2);
    const auto u = cycle.update_for(s2);
    REQUIRE(u.poses.size() == 3);
    std::map<std::string, protocol::PoseEntry> by;
    for (const auto& e : u.poses) by[e.target] = e;
    CHECK(by["t2"].direct);
    CHECK_FALSE(by["t1"].direct);
    CHECK_FALSE(by["t1"].lose_track);
    CHECK(gap(*by["t1"].pose, w.measurement(s2, t1)) < 1e-9);
    CHECK((by["t1"].uncertainty.array() > 0).all());
    CHECK(by["t3"].lose_track);
    CHECK_FALSE(by["t3"].pose.has_value());
    CHECK(by["t3"].uncertainty.isZero());
    CHECK(cycle.solve_t_us == snap.taken_at_us);
  }

  TEST_CASE("broadcast poses are the optimised ones when covered") {
    Rng rng(51);
    const auto w = fixture::random_world(rng, 2, 2);
    const auto snap = fixture::make_snapshot(w, fixture::full_edges(w), {1e-3, 1e-2}, &rng);
    FusionEngine engine;
    const auto cycle = engine.run_cycle(snap, {s2});
    const auto& st = cycle.report->state;
    const auto& est = cycle.estimates.at(s2);
    for (const auto& e : est) {
      CHECK(e.direct);
      CHECK(gap(*e.pose, se3::relative(st.pose(s2), st.pose(e.target))) < 1e-12);
      CHECK(e.path == std::vector<std::string>{"s2", e.target.name});
    }
  }

  TEST_CASE("anchor persists and can be forced") {
    Rng rng(52);
    const auto w = fixture::random_world(rng, 2, 1);
    const auto snap = fixture::make_snapshot(w, fixture::full_edges(w));
    FusionEngine engine;
    engine.run_cycle(snap, {});
    CHECK(engine.anchor() == s1);
    engine.force_anchor(snap, s2);
    engine.run_cycle(snap, {});
    CHECK(engine.anchor() == s2);
    CHECK_THROWS_AS(engine.force_anchor(snap, NodeId::active("zz")), UnknownNode);
    const auto lost = fixture::make_snapshot(w, {{s1, t1, true, 0}, {s2, t1, false, 0}});
    CHECK_THROWS_AS(engine.force_anchor(lost, s2), IneligibleAnchor);
    // the forced sensor lost its edges: fall back to an eligible one
    engine.run_cycle(lost, {});
    CHECK(engine.anchor() == s1);
  }

  TEST_CASE("empty snapshots produce no solve") {
    FusionEngine engine;
    GraphSnapshot snap;
    snap.active.insert(s1);
    snap.passive.insert(t1);
    const auto cycle = engine.run_cycle(snap, {s1});
    CHECK_FALSE(cycle.report.has_value());
    REQUIRE(cycle.estimates.at(s1).size() == 1);
    CHECK(cycle.estimates.at(s1)[0].lose_track);
  }
}

TEST_SUITE("replay") {
  TEST_CASE("one cycle per timestamp, updates per sensor") {
    std::vector<protocol::Measurement> log;
    for (TimestampUs t : {100, 200, 300}) {
      log.push_back(meas("s1", "t1", t, Pose::from_translation(1, 0, 0)));
      log.push_back(meas("s1", "t2", t, Pose::from_translation(0, 1, 0)));
      log.push_back(meas("s2", "t2", t, Pose::from_translation(0, 0, 1)));
    }
    log.push_back(meas("s2", "t2", 150));  // appended last, replayed in time order
    const auto r = replay(log);
    CHECK(r.cycles == 4);
    CHECK(r.records.size() == 8);
    CHECK(r.dropped_stale == 0);
    REQUIRE(r.last.has_value());
    CHECK(r.last->solve_t_us == 300);
    const auto& u = r.records.back().update;
    CHECK(u.solve_t_us == 300);
    for (const auto& e : u.poses) CHECK_FALSE(e.lose_track);
  }

  TEST_CASE("stale measurements are counted") {
    std::vector<protocol::Measurement> log{meas("s1", "t1", 100), meas("s1", "t1", 100)};
    const auto r = replay(log);
    CHECK(r.dropped_stale == 0);  // equal stamps replace
    ReplayOptions opts;
    opts.cycle_every = 5;
    const auto few = replay({meas("s1", "t1", 1), meas("s1", "t1", 2), meas("s1", "t1", 3)}, opts);
    CHECK(few.cycles == 1);
  }

  TEST_CASE("result records round trip") {
    ResultRecord r;
    r.sensor_id = "s1";
    r.update.solve_t_us = 42;
    protocol::PoseEntry e;
    e.target = "t1";
    e.pose = Pose::from_translation(1, 2, 3);
    e.direct = true;
    e.lose_track = false;
    e.uncertainty = Vector6d::Constant(0.5);
    r.update.poses.push_back(e);
    const auto j = r.to_json();
    CHECK(j["type"] == "update");
    CHECK(j["sensor_id"] == "s1");
    const auto back = ResultRecord::from_json(j);
    CHECK(back.sensor_id == "s1");
    CHECK(back.update.solve_t_us == 42);
    REQUIRE(back.update.poses.size() == 1);
    CHECK(back.update.poses[0].pose->translation() == Eigen::Vector3d(1, 2, 3));
  }
}
