#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dsched/scheduler.hpp"

using namespace dsched;

namespace {

PolicyParams zero_policy(int d, int d_task) {
  PolicyParams p;
  p.W_assign = Matrix(1, d + d_task);
  p.W_class = Matrix(3, d);
  return p;
}

Task task_with_feature(std::vector<double> f) {
  Task t;
  t.feature = std::move(f);
  return t;
}

}  // namespace

TEST_CASE("zero weights score all active nodes uniformly") {
  Matrix z(3, 2);
  z(0, 0) = 1.0;
  z(1, 1) = -4.0;
  z(2, 0) = 9.0;
  auto p = zero_policy(2, 1);
  auto scores = score_assignment(z, task_with_feature({1.0}), p, {1, 1, 1});
  for (double s : scores) CHECK(s == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("a single active node takes all the probability") {
  Matrix z(3, 2);
  auto p = zero_policy(2, 1);
  auto scores = score_assignment(z, task_with_feature({0.0}), p, {0, 1, 0});
  CHECK(scores[0] == 0.0);
  CHECK(scores[1] == 1.0);
  CHECK(scores[2] == 0.0);
}

TEST_CASE("scoring matches a naive masked softmax") {
  Rng rng(13);
  for (int rep = 0; rep < 30; ++rep) {
    int n = rng.uniform_int(2, 8);
    int d = rng.uniform_int(1, 4);
    int dt = rng.uniform_int(1, 3);
    Matrix z(n, d);
    for (double& v : z.data()) v = rng.normal();
    PolicyParams p = zero_policy(d, dt);
    for (double& v : p.W_assign.data()) v = rng.normal();
    std::vector<double> feat(static_cast<size_t>(dt));
    for (double& v : feat) v = rng.normal();
    std::vector<char> active(static_cast<size_t>(n));
    int n_active = 0;
    for (auto& a : active) {
      a = rng.uniform() < 0.7 ? 1 : 0;
      n_active += a;
    }
    if (n_active == 0) active[0] = 1;

    auto scores = score_assignment(z, task_with_feature(feat), p, active);

    std::vector<double> logits(static_cast<size_t>(n), 0.0);
    double mx = -1e300;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<size_t>(i)]) continue;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += p.W_assign(0, c) * z(i, c);
      for (int c = 0; c < dt; ++c)
        s += p.W_assign(0, d + c) * feat[static_cast<size_t>(c)];
      logits[static_cast<size_t>(i)] = s;
      mx = std::max(mx, s);
    }
    double denom = 0.0;
    for (int i = 0; i < n; ++i)
      if (active[static_cast<size_t>(i)])
        denom += std::exp(logits[static_cast<size_t>(i)] - mx);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double expect = active[static_cast<size_t>(i)]
                          ? std::exp(logits[static_cast<size_t>(i)] - mx) / denom
                          : 0.0;
      CHECK(scores[static_cast<size_t>(i)] ==
            doctest::Approx(expect).epsilon(1e-12));
      total += scores[static_cast<size_t>(i)];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("scores are invariant to a uniform logit shift") {
  Rng rng(29);
  int n = 5, d = 3;
  Matrix z(n, d);
  for (double& v : z.data()) v = rng.normal();
  PolicyParams p = zero_policy(d, 1);
  for (double& v : p.W_assign.data()) v = rng.normal();
  Task t = task_with_feature({0.3});
  std::vector<char> active(static_cast<size_t>(n), 1);
  auto base = score_assignment(z, t, p, active);

  // add the same vector to every row: logits all shift by the same amount
  std::vector<double> u = {0.7, -1.2, 2.5};
  Matrix z2 = z;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) z2(i, c) += u[static_cast<size_t>(c)];
  auto shifted = score_assignment(z2, t, p, active);
  for (int i = 0; i < n; ++i)
    CHECK(shifted[static_cast<size_t>(i)] ==
          doctest::Approx(base[static_cast<size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("scoring throws when no node is active") {
  Matrix z(2, 2);
  auto p = zero_policy(2, 1);
  CHECK_THROWS_AS(score_assignment(z, task_with_feature({0.0}), p, {0, 0}),
                  SchedulingError);
}

TEST_CASE("select_node breaks ties toward the lowest id") {
  CHECK(select_node({0.2, 0.4, 0.4}) == 1);
  CHECK(select_node({0.5, 0.5}) == 0);
  CHECK(select_node({0.0, 0.0, 1.0}) == 2);
}

TEST_CASE("classify_load with zero weights is uniform") {
  auto p = zero_policy(4, 1);
  std::vector<double> zi = {1.0, 2.0, 3.0, 4.0};
  LoadClassification c = classify_load(zi, p);
  for (double v : c.probs) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(c.cls == LoadClass::Underloaded);  // argmax tie -> lowest class
}

TEST_CASE("classify_load matches a direct softmax") {
  Rng rng(37);
  auto p = zero_policy(3, 1);
  for (double& v : p.W_class.data()) v = rng.normal();
  std::vector<double> zi = {0.5, -1.0, 2.0};
  LoadClassification c = classify_load(zi, p);
  std::vector<double> logit(3);
  for (int k = 0; k < 3; ++k)
    for (int f = 0; f < 3; ++f)
      logit[static_cast<size_t>(k)] += p.W_class(k, f) * zi[static_cast<size_t>(f)];
  double mx = std::max({logit[0], logit[1], logit[2]});
  double denom = std::exp(logit[0] - mx) + std::exp(logit[1] - mx) +
                 std::exp(logit[2] - mx);
  int best = 0;
  for (int k = 0; k < 3; ++k) {
    CHECK(c.probs[static_cast<size_t>(k)] ==
          doctest::Approx(std::exp(logit[static_cast<size_t>(k)] - mx) / denom)
              .epsilon(1e-12));
    if (logit[static_cast<size_t>(k)] > logit[static_cast<size_t>(best)]) best = k;
  }
  CHECK(static_cast<int>(c.cls) == best);
}

namespace {

SchedView make_view(std::vector<SchedNodeView> nodes) {
  SchedView v;
  v.nodes = std::move(nodes);
  v.path_delay = [](int, int) { return 0.0; };
  return v;
}

}  // namespace

TEST_CASE("round robin cycles over active nodes only") {
  SchedView v = make_view({{0, true, 1, 0, 0},
                           {1, false, 1, 0, 0},
                           {2, true, 1, 0, 0},
                           {3, true, 1, 0, 0}});
  RoundRobinState rr;
  CHECK(baseline_round_robin(v, rr) == 0);
  CHECK(baseline_round_robin(v, rr) == 2);
  CHECK(baseline_round_robin(v, rr) == 3);
  CHECK(baseline_round_robin(v, rr) == 0);  // wraps
}

TEST_CASE("random baseline picks only active nodes, deterministically") {
  SchedView v = make_view({{0, false, 1, 0, 0},
                           {1, true, 1, 0, 0},
                           {2, true, 1, 0, 0}});
  Rng a(42), b(42);
  for (int i = 0; i < 50; ++i) {
    int x = baseline_random(v, a);
    CHECK((x == 1 || x == 2));
    CHECK(baseline_random(v, b) == x);
  }
}

TEST_CASE("least loaded normalizes by capacity") {
  // node 0: 4 work at cap 1 -> 4; node 1: 6 work at cap 3 -> 2
  SchedView v = make_view({{0, true, 1.0, 4.0, 4.0},
                           {1, true, 3.0, 6.0, 2.0}});
  CHECK(baseline_least_loaded(v) == 1);
}

TEST_CASE("least loaded ties go to the lowest id") {
  SchedView v = make_view({{0, true, 2.0, 4.0, 2.0},
                           {1, true, 1.0, 2.0, 2.0}});
  CHECK(baseline_least_loaded(v) == 0);
}

TEST_CASE("greedy latency accounts for drain, service, and path delay") {
  SchedView v;
  // node 0: drain 5 + task 10/1 = 15, delay 0 -> 15
  // node 1: drain 0 + task 10/2 = 5, delay 12 -> 17
  v.nodes = {{0, true, 1.0, 5.0, 5.0}, {1, true, 2.0, 0.0, 0.0}};
  v.path_delay = [](int, int node) { return node == 1 ? 12.0 : 0.0; };
  Task t;
  t.size = 10.0;
  t.origin = 0;
  CHECK(baseline_greedy_latency(v, t) == 0);
  v.path_delay = [](int, int) { return 0.0; };
  CHECK(baseline_greedy_latency(v, t) == 1);
}

TEST_CASE("baselines throw when nothing is active") {
  SchedView v = make_view({{0, false, 1, 0, 0}});
  RoundRobinState rr;
  Rng rng(1);
  Task t;
  CHECK_THROWS_AS(baseline_round_robin(v, rr), SchedulingError);
  CHECK_THROWS_AS(baseline_random(v, rng), SchedulingError);
  CHECK_THROWS_AS(baseline_least_loaded(v), SchedulingError);
  CHECK_THROWS_AS(baseline_greedy_latency(v, t), SchedulingError);
}
