#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dsched/experiments.hpp"
#include "dsched/trainer.hpp"

using namespace dsched;

namespace {

Dims small_dims() {
  Dims d;
  d.d0 = 4;
  d.d = 4;
  d.da = 4;
  d.L = 1;
  d.d_task = 2;
  return d;
}

TrainItem make_item(uint64_t seed, int n = 5) {
  Rng rng(seed);
  Matrix f(n, 4);
  for (double& v : f.data()) v = rng.normal();
  EdgeList edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  TrainItem item{SystemGraph::build(n, edges, std::move(f),
                                    std::vector<char>(static_cast<size_t>(n), 1)),
                 {},
                 std::vector<int>(static_cast<size_t>(n))};
  for (int t = 0; t < 4; ++t) {
    Task task;
    task.id = t;
    task.feature = {rng.normal(), rng.normal()};
    item.tasks.push_back({task, rng.uniform_int(0, n - 1)});
  }
  for (auto& c : item.classes) c = rng.uniform_int(0, 2);
  return item;
}

}  // namespace

TEST_CASE("zero policy heads give the analytic uniform loss") {
  ModelParams params = model_init(small_dims(), 3);
  params.policy.W_assign.fill(0.0);
  params.policy.W_class.fill(0.0);
  int n = 5;
  TrainItem item = make_item(1, n);
  std::vector<TrainItem> batch = {item};
  auto [loss, grads] = loss_and_grad(params, batch, 0.5);
  double expect = std::log(static_cast<double>(n)) + 0.5 * std::log(3.0);
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero class weight leaves the class head untouched") {
  ModelParams params = model_init(small_dims(), 5);
  std::vector<TrainItem> batch = {make_item(2)};
  auto [loss, grads] = loss_and_grad(params, batch, 0.0);
  for (double v : grads.policy.W_class.data()) CHECK(v == 0.0);
  double norm = 0.0;
  for (double v : grads.policy.W_assign.data()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("an empty batch carries no labels") {
  ModelParams params = model_init(small_dims(), 5);
  TrainItem item = make_item(3);
  item.tasks.clear();
  std::vector<char> off(item.graph.active().size(), 0);
  TrainItem dead{SystemGraph::build(item.graph.n(), item.graph.edges(),
                                    item.graph.features(), off),
                 {},
                 item.classes};
  std::vector<TrainItem> batch = {dead};
  CHECK_THROWS_AS(loss_and_grad(params, batch, 0.5), DataError);
}

TEST_CASE("gradient clipping caps the global norm") {
  ModelParams params = model_init(small_dims(), 7);
  std::vector<TrainItem> batch = {make_item(4)};
  auto [loss, grads] = loss_and_grad(params, batch, 0.5);
  double before = grads.global_norm();
  REQUIRE(before > 0.0);
  double limit = before / 2.0;
  grads.clip_global_norm(limit);
  CHECK(grads.global_norm() == doctest::Approx(limit).epsilon(1e-12));
  // already-small gradients pass through unscaled
  Gradients g2 = grads;
  g2.clip_global_norm(1e9);
  CHECK(g2.global_norm() == doctest::Approx(grads.global_norm()).epsilon(1e-15));
}

TEST_CASE("a zero learning rate leaves the parameters unchanged") {
  ModelParams init = model_init(small_dims(), 9);
  std::vector<TrainItem> items = {make_item(5), make_item(6)};
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.max_steps = 3;
  cfg.eval_every = 1;
  cfg.batch_snapshots = 2;
  TrainResult r = train(items, items, init, cfg);
  CHECK(r.params.layers[0].W == init.layers[0].W);
  CHECK(r.params.attention.Wq == init.attention.Wq);
  CHECK(r.params.policy.W_assign == init.policy.W_assign);
  CHECK(r.params.fusion.gate_raw == init.fusion.gate_raw);
  CHECK(r.curve.size() == 3);
}

TEST_CASE("training lowers the loss on a memorizable batch") {
  ModelParams init = model_init(small_dims(), 11);
  std::vector<TrainItem> items = {make_item(7), make_item(8)};
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.max_steps = 120;
  cfg.eval_every = 10;
  cfg.batch_snapshots = 2;
  TrainResult r = train(items, items, init, cfg);
  auto [loss0, g0] = loss_and_grad(init, items, cfg.lambda_class);
  auto [loss1, g1] = loss_and_grad(r.params, items, cfg.lambda_class);
  CHECK(loss1 < loss0);
}

TEST_CASE("training is deterministic") {
  ModelParams init = model_init(small_dims(), 13);
  std::vector<TrainItem> items = {make_item(9), make_item(10), make_item(11)};
  TrainConfig cfg;
  cfg.max_steps = 20;
  cfg.eval_every = 5;
  cfg.batch_snapshots = 2;
  cfg.seed = 21;
  TrainResult a = train(items, items, init, cfg);
  TrainResult b = train(items, items, init, cfg);
  CHECK(a.params.layers[0].W == b.params.layers[0].W);
  CHECK(curve_to_csv(a.curve) == curve_to_csv(b.curve));
}

TEST_CASE("evaluate scores a perfectly biased labeling at one") {
  ModelParams params = model_init(small_dims(), 15);
  params.policy.W_assign.fill(0.0);  // uniform scores, argmax -> node 0
  TrainItem item = make_item(12);
  for (auto& [task, label] : item.tasks) label = 0;
  std::vector<TrainItem> items = {item};
  EvalResult ev = evaluate(params, items);
  CHECK(ev.assignment_accuracy == 1.0);
}

TEST_CASE("convergence steps on a hand-built curve") {
  LearningCurve curve;
  // 15 eval points: ramps to 0.8 at step 200 and plateaus
  std::vector<double> acc = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75,
                             0.78, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8};
  for (size_t i = 0; i < acc.size(); ++i)
    curve.push_back({static_cast<int>(20 * (i + 1)), 1.0, 0.0, acc[i]});
  // moving averages of width 10: the last one (points 6..15) is the plateau
  std::vector<double> ma;
  for (size_t i = 9; i < acc.size(); ++i) {
    double s = 0.0;
    for (size_t j = i - 9; j <= i; ++j) s += acc[j];
    ma.push_back(s / 10.0);
  }
  double plateau = *std::max_element(ma.begin(), ma.end());
  int expect = 0;
  for (size_t i = 0; i < ma.size(); ++i)
    if (ma[i] >= 0.95 * plateau) {
      expect = curve[i + 9].step;
      break;
    }
  auto got = convergence_steps(curve);
  REQUIRE(got.has_value());
  CHECK(*got == expect);
}

TEST_CASE("convergence of a flat curve is the first full window") {
  LearningCurve curve;
  for (int i = 1; i <= 12; ++i)
    curve.push_back({10 * i, 1.0, 0.0, 0.5});
  auto got = convergence_steps(curve);
  REQUIRE(got.has_value());
  CHECK(*got == 100);  // tenth eval point
}

TEST_CASE("short curves report no convergence") {
  LearningCurve curve;
  for (int i = 1; i <= 9; ++i) curve.push_back({i, 1.0, 0.0, 0.9});
  CHECK(!convergence_steps(curve).has_value());
}

TEST_CASE("build_dataset keeps only labeled snapshots with valid targets") {
  GenConfig gc = default_benchmark().gen;
  gc.n_nodes = 8;
  gc.duration_ms = 400.0;
  Scenario sc = generate(gc, 31);
  NormStats st = compute_norm_stats({sc});
  Scenario pp = preprocess(sc, st);
  auto items = build_dataset({pp});
  CHECK(items.size() == pp.snapshots.size());
  for (const auto& item : items) {
    CHECK(item.graph.n() == pp.meta.n_nodes);
    CHECK(item.classes.size() == static_cast<size_t>(item.graph.n()));
    for (const auto& [task, label] : item.tasks) {
      CHECK((label >= 0 && label < item.graph.n()));
      CHECK(item.graph.active()[static_cast<size_t>(label)]);
    }
  }
}

TEST_CASE("curve csv layout") {
  LearningCurve curve = {{10, 1.5, 0.25, 0.5}};
  CHECK(curve_to_csv(curve) ==
        "step,train_loss,val_assignment_accuracy,val_perception_accuracy\n"
        "10,1.500000,0.250000,0.500000\n");
}
