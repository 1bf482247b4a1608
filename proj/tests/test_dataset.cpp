#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "dsched/dataset.hpp"
#include "dsched/experiments.hpp"

using namespace dsched;

namespace {

GenConfig small_gen() {
  GenConfig gc = default_benchmark().gen;
  gc.n_nodes = 8;
  gc.duration_ms = 500.0;
  gc.snapshot_interval_ms = 50.0;
  return gc;
}

NodeRecord rec(int id, double queue, double cap, double mem, double lat,
               bool active = true) {
  NodeRecord r;
  r.id = id;
  r.raw = {queue, cap, mem, lat, active};
  return r;
}

}  // namespace

TEST_CASE("load class thresholds") {
  CHECK(load_class_of(0.0) == 0);
  CHECK(load_class_of(0.3) == 0);
  CHECK(load_class_of(1.0 / 3.0) == 1);
  CHECK(load_class_of(0.5) == 1);
  CHECK(load_class_of(2.0 / 3.0) == 1);
  CHECK(load_class_of(0.7) == 2);
  CHECK(load_class_of(1.0) == 2);
}

TEST_CASE("generation is byte-identical under a fixed seed") {
  GenConfig gc = small_gen();
  CHECK(scenario_to_jsonl(generate(gc, 5)) == scenario_to_jsonl(generate(gc, 5)));
  CHECK(scenario_to_jsonl(generate(gc, 5)) != scenario_to_jsonl(generate(gc, 6)));
}

TEST_CASE("generated scenarios have the requested shape") {
  GenConfig gc = small_gen();
  Scenario sc = generate(gc, 3);
  CHECK(sc.meta.n_nodes == 8);
  CHECK(sc.snapshots.size() == 10);  // 500 ms at 50 ms intervals
  long tasks = 0;
  for (const auto& snap : sc.snapshots) {
    CHECK(snap.labels.present);
    CHECK(snap.labels.classes.size() == 8);
    for (int c : snap.labels.classes) CHECK((c >= 0 && c <= 2));
    for (const auto& t : snap.tasks) {
      CHECK(t.deadline > t.arrival_t);
      CHECK(t.size > 0.0);
      CHECK((t.origin >= 0 && t.origin < 8));
      CHECK(t.feature.size() == 4);
      ++tasks;
    }
    for (const auto& r : snap.nodes) CHECK(r.raw.cpu_capacity >= 1.0);
  }
  CHECK(tasks > 0);
}

TEST_CASE("zero churn keeps every node active") {
  GenConfig gc = small_gen();
  gc.churn_rate = 0.0;
  Scenario sc = generate(gc, 4);
  for (const auto& snap : sc.snapshots)
    for (const auto& r : snap.nodes) CHECK(r.raw.active);
}

TEST_CASE("zero arrival rate generates no tasks") {
  GenConfig gc = small_gen();
  gc.arrival_rate = 0.0;
  Scenario sc = generate(gc, 4);
  for (const auto& snap : sc.snapshots) {
    CHECK(snap.tasks.empty());
    CHECK(snap.labels.assignments.empty());
  }
}

TEST_CASE("encoding the mean state gives zeros plus the active flag") {
  NormStats st;
  st.mean = {2.0, 3.0, 0.5, 10.0};
  st.stddev = {1.0, 1.0, 0.25, 5.0};
  auto v = encode_state({2.0, 3.0, 0.5, 10.0, true}, st);
  CHECK(v.size() == 8);
  for (int i = 0; i < 4; ++i) CHECK(v[static_cast<size_t>(i)] == 0.0);
  CHECK(v[4] == 1.0);
  CHECK(v[5] == 0.0);
  CHECK(v[6] == 0.0);
  CHECK(v[7] == 0.0);
}

TEST_CASE("encoding z-scores and clamps per field") {
  NormStats st;
  st.mean = {0.0, 0.0, 0.0, 0.0};
  st.stddev = {1.0, 2.0, 1.0, 1.0};
  auto v = encode_state({1.5, 1.0, 100.0, -100.0, true}, st);
  CHECK(v[0] == 1.5);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 3.0);   // clamped high
  CHECK(v[3] == -3.0);  // clamped low
}

TEST_CASE("inactive nodes encode as the zero vector") {
  NormStats st;
  st.mean = {1.0, 1.0, 1.0, 1.0};
  st.stddev = {1.0, 1.0, 1.0, 1.0};
  auto v = encode_state({9.0, 9.0, 9.0, 9.0, false}, st);
  for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("a constant field encodes to zero instead of dividing by zero") {
  NormStats st;
  st.mean = {5.0, 0.0, 0.0, 0.0};
  st.stddev = {0.0, 1.0, 1.0, 1.0};
  auto v = encode_state({7.0, 0.0, 0.0, 0.0, true}, st);
  CHECK(v[0] == 0.0);
}

TEST_CASE("norm stats use population moments over active records only") {
  Scenario sc;
  sc.meta.n_nodes = 3;
  Snapshot snap;
  snap.nodes = {rec(0, 1.0, 2.0, 0.2, 10.0),
                rec(1, 3.0, 4.0, 0.6, 30.0),
                rec(2, 99.0, 99.0, 99.0, 99.0, false)};
  sc.snapshots.push_back(snap);
  NormStats st = compute_norm_stats({sc});
  CHECK(st.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(st.stddev[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(st.mean[3] == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(st.stddev[3] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_THROWS_AS(compute_norm_stats({}), DataError);
}

TEST_CASE("preprocess drops dead nodes and cleans edges") {
  Scenario sc;
  sc.meta.n_nodes = 4;
  Snapshot snap;
  snap.t = 0.0;
  snap.nodes = {rec(0, 1.0, 1.0, 1.0, 0.0),
                rec(1, 1.0, 1.0, 1.0, 0.0, false),  // never active
                rec(2, 2.0, 1.0, 1.0, 0.0),
                rec(3, 3.0, 1.0, 1.0, 0.0)};
  snap.edges = {{0, 2}, {0, 2}, {1, 2}, {2, 3}, {0, 0}};
  Task t;
  t.id = 0;
  t.origin = 3;
  t.deadline = 1.0;
  t.feature = {0, 0, 0, 0};
  snap.tasks = {t};
  sc.snapshots.push_back(snap);

  NormStats st;
  st.stddev = {1.0, 1.0, 1.0, 1.0};
  Scenario pp = preprocess(sc, st);
  CHECK(pp.meta.n_nodes == 3);
  // kept 0,2,3 -> 0,1,2; edge to the dropped node and duplicates vanish
  CHECK(pp.snapshots[0].edges == EdgeList{{0, 1}, {1, 2}});
  CHECK(pp.snapshots[0].tasks[0].origin == 2);
  for (const auto& r : pp.snapshots[0].nodes) CHECK(r.enc.size() == 8);
  // idempotent
  Scenario again = preprocess(pp, st);
  CHECK(scenario_to_jsonl(again) == scenario_to_jsonl(pp));
}

TEST_CASE("preprocess requires at least two surviving nodes") {
  Scenario sc;
  sc.meta.n_nodes = 2;
  Snapshot snap;
  snap.nodes = {rec(0, 0, 1, 1, 0), rec(1, 0, 1, 1, 0, false)};
  sc.snapshots.push_back(snap);
  NormStats st;
  st.stddev = {1, 1, 1, 1};
  CHECK_THROWS_AS(preprocess(sc, st), DataError);
}

TEST_CASE("split partitions and respects the ratios") {
  std::vector<Scenario> scs;
  for (int i = 0; i < 10; ++i) {
    Scenario sc;
    sc.meta.seed = static_cast<uint64_t>(i);
    scs.push_back(sc);
  }
  SplitResult sp = split(scs, {0.7, 0.15, 0.15}, 77);
  CHECK(sp.train.size() == 7);
  CHECK(sp.val.size() >= 1);
  CHECK(sp.test.size() >= 1);
  CHECK(sp.train.size() + sp.val.size() + sp.test.size() == 10);
  std::set<uint64_t> seen;
  for (const auto* part : {&sp.train, &sp.val, &sp.test})
    for (const auto& sc : *part) seen.insert(sc.meta.seed);
  CHECK(seen.size() == 10);

  SplitResult sp2 = split(scs, {0.7, 0.15, 0.15}, 77);
  for (size_t i = 0; i < sp.train.size(); ++i)
    CHECK(sp.train[i].meta.seed == sp2.train[i].meta.seed);
}

TEST_CASE("jsonl round trip is exact") {
  Scenario sc = generate(small_gen(), 9);
  std::string text = scenario_to_jsonl(sc);
  Scenario back = scenario_from_jsonl(text);
  CHECK(scenario_to_jsonl(back) == text);
  CHECK(back.meta.n_nodes == sc.meta.n_nodes);
  CHECK(back.snapshots.size() == sc.snapshots.size());
}

TEST_CASE("malformed jsonl raises a data error") {
  CHECK_THROWS_AS(scenario_from_jsonl(""), DataError);
  CHECK_THROWS_AS(scenario_from_jsonl("{not json\n"), DataError);
}
