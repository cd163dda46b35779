#include <doctest.h>

#include "oracles/fixtures.hpp"
#include "oracles/oracles.hpp"
#include "scenefuse/completion.hpp"
#include "scenefuse/errors.hpp"
#include "scenefuse/fusion.hpp"

using namespace scenefuse;
using namespace scenefuse::completion;
using fixture::Rng;

namespace {

const NodeId a1 = NodeId::active("a1"), a2 = NodeId::active("a2");
const NodeId p1 = NodeId::passive("p1"), p2 = NodeId::passive("p2"), p3 = NodeId::passive("p3");

fixture::World desk(Rng& rng, int sensors, int targets) {
  fixture::World w;
  for (int i = 1; i <= sensors; ++i) w.poses[NodeId::active("a" + std::to_string(i))] = fixture::random_pose(rng, 2.0);
  for (int j = 1; j <= targets; ++j) w.poses[NodeId::passive("p" + std::to_string(j))] = fixture::random_pose(rng);
  return w;
}

double gap(const Pose& a, const Pose& b) {
  const Pose d = a.inverse() * b;
  return std::max(d.translation().norm(), d.angle());
}

}  // namespace

TEST_SUITE("completion") {
  TEST_CASE("a tracked direct edge is returned as is") {
    Rng rng(40);
    const auto w = desk(rng, 1, 1);
    const auto snap = fixture::make_snapshot(w, fixture::full_edges(w));
    const auto c = query_pose(snap, a1, p1);
    CHECK(c.direct);
    CHECK(c.path.edges.size() == 1);
    CHECK(gap(c.pose, snap.edge(a1, p1)->pose) == 0.0);
  }

  TEST_CASE("occluded target is completed through a second sensor") {
    Rng rng(41);
    const auto w = desk(rng, 2, 2);
    std::vector<fixture::EdgeSpec> edges{{a1, p1, false, 0}, {a1, p2, true, 0}, {a2, p1, true, 0}, {a2, p2, true, 0}};
    const auto snap = fixture::make_snapshot(w, edges);
    const auto c = query_pose(snap, a1, p1);
    CHECK_FALSE(c.direct);
    CHECK(c.path.edges.size() == 2);
    CHECK(c.path.nodes() == std::vector<NodeId>{a1, p2, p1});
    CHECK(c.path.edges[1].kind == LinkKind::Intra);
    const Pose expect = snap.edge(a1, p2)->pose * se3::relative(snap.edge(a2, p2)->pose, snap.edge(a2, p1)->pose);
    CHECK(gap(c.pose, expect) < 1e-12);
    CHECK(gap(c.pose, w.measurement(a1, p1)) < 1e-9);
    CHECK(c.path.violations(a1, p1).empty());
  }

  TEST_CASE("unreachable targets and unknown nodes") {
    Rng rng(42);
    const auto w = desk(rng, 2, 2);
    const auto snap = fixture::make_snapshot(w, {{a1, p1, true, 0}, {a2, p2, false, 0}});
    CHECK_THROWS_AS(query_pose(snap, a1, p2), NoPath);
    CHECK_THROWS_AS(query_pose(snap, NodeId::active("zz"), p1), UnknownNode);
    CHECK_THROWS_AS(query_pose(snap, a1, NodeId::passive("zz")), UnknownNode);
    CHECK_THROWS_AS(complete_all(snap, NodeId::active("zz")), UnknownNode);
  }

  TEST_CASE("complete_all examples") {
    Rng rng(43);
    auto w = desk(rng, 1, 3);
    auto all = complete_all(fixture::make_snapshot(w, fixture::full_edges(w)), a1);
    CHECK(all.size() == 3);
    for (const auto& [t, c] : all) CHECK((c && c->direct));

    // mock-up: three targets, one occluded to the headset but seen by the camera
    w = desk(rng, 2, 3);
    auto edges = fixture::full_edges(w);
    for (auto& e : edges) {
      if (e.sensor == a1 && e.target == p3) e.status = false;
    }
    all = complete_all(fixture::make_snapshot(w, edges), a1);
    CHECK((all.at(p1) && all.at(p1)->direct));
    CHECK((all.at(p2) && all.at(p2)->direct));
    REQUIRE(all.at(p3).has_value());
    CHECK_FALSE(all.at(p3)->direct);

    all = complete_all(fixture::make_snapshot(w, {}), a1);
    for (const auto& [t, c] : all) CHECK_FALSE(c.has_value());
  }

  TEST_CASE("selection prefers fresher paths, then names") {
    // a1 sees p1 (old) and p2 (new); p3 is reachable via p1 or p2 through a2
    Rng rng(44);
    const auto w = desk(rng, 2, 3);
    std::vector<fixture::EdgeSpec> edges{{a1, p1, true, 100}, {a1, p2, true, 300}, {a1, p3, false, 300},
                                         {a2, p1, true, 300}, {a2, p2, true, 300}, {a2, p3, true, 300}};
    auto c = query_pose(fixture::make_snapshot(w, edges), a1, p3);
    CHECK(c.path.nodes() == std::vector<NodeId>{a1, p2, p3});
    CHECK(c.path.freshness == 300);
    for (auto& e : edges) e.t_us = 300;
    c = query_pose(fixture::make_snapshot(w, edges), a1, p3);
    CHECK(c.path.nodes() == std::vector<NodeId>{a1, p1, p3});
    CHECK(better_path(c.path, query_pose(fixture::make_snapshot(w, edges), a1, p3).path) == false);
  }

  TEST_CASE("optimised intra links are used when the report covers them") {
    Rng rng(45);
    const auto w = desk(rng, 2, 2);
    std::vector<fixture::EdgeSpec> edges{{a1, p1, false, 0}, {a1, p2, true, 0}, {a2, p1, true, 0}, {a2, p2, true, 0}};
    const auto snap = fixture::make_snapshot(w, edges, {1e-3, 1e-2}, &rng);
    FusionEngine engine;
    const auto cycle = engine.run_cycle(snap, {a1});
    REQUIRE(cycle.report.has_value());
    const auto& st = cycle.report->state;
    const auto c = query_pose(snap, a1, p1, &*cycle.report);
    const Pose expect = snap.edge(a1, p2)->pose * se3::relative(st.pose(p2), st.pose(p1));
    CHECK(gap(c.pose, expect) < 1e-12);
  }

  TEST_CASE("identical snapshots give identical paths") {
    Rng rng(46);
    const auto w = desk(rng, 3, 3);
    auto edges = fixture::full_edges(w);
    edges[0].status = edges[4].status = false;
    const auto snap = fixture::make_snapshot(w, edges, {1e-3, 1e-3}, &rng);
    const auto x = complete_all(snap, a1), y = complete_all(snap, a1);
    for (const auto& [t, c] : x) {
      REQUIRE(c.has_value() == y.at(t).has_value());
      if (!c) continue;
      CHECK(c->path.nodes() == y.at(t)->path.nodes());
      CHECK(c->pose.to_array() == y.at(t)->pose.to_array());
    }
  }

  TEST_CASE("depth-first search agrees with exhaustive enumeration") {
    Rng rng(47);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> stamp(0, 4);
    for (int trial = 0; trial < 300; ++trial) {
      const int ns = 1 + trial % 3, nt = 1 + (trial / 3) % 3;
      const auto w = fixture::random_world(rng, ns, nt);
      std::vector<fixture::EdgeSpec> edges;
      for (auto e : fixture::full_edges(w)) {
        if (u(rng) < 0.3) continue;
        e.status = u(rng) > 0.3;
        e.t_us = stamp(rng) * 50'000;
        edges.push_back(e);
      }
      const auto snap = fixture::make_snapshot(w, edges);
      for (const auto& s : w.active()) {
        const auto got = complete_all(snap, s);
        for (const auto& t : w.passive()) {
          const auto want = oracle::brute_force_path(snap, nullptr, s, t);
          REQUIRE(want.has_value() == got.at(t).has_value());
          if (!want) continue;
          CHECK(got.at(t)->path.nodes() == want->nodes);
          CHECK(gap(got.at(t)->pose, want->pose) < 1e-12);
          // noiseless: every route agrees with the direct measurement
          CHECK(gap(got.at(t)->pose, w.measurement(s, t)) < 1e-9);
          CHECK(got.at(t)->path.violations(s, t).empty());
        }
      }
    }
  }

  TEST_CASE("malformed paths are detected") {
    KinematicPath p;
    CHECK_FALSE(p.violations(a1, p1).empty());
    p.edges.push_back({LinkKind::Inter, a1, p2, Pose(), 5, false});
    p.edges.push_back({LinkKind::Inter, p1, a1, Pose(), 5, true});
    p.freshness = 5;
    const auto bad = p.violations(a1, p1);
    CHECK(bad.size() >= 2);
  }
}
