#include "dsched/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dsched {

BenchmarkConfig default_benchmark() {
  BenchmarkConfig cfg;
  cfg.gen.n_nodes = 20;
  cfg.gen.duration_ms = 2000.0;
  cfg.gen.snapshot_interval_ms = 25.0;
  cfg.gen.arrival_rate = 0.08;
  cfg.gen.mean_task_size = 700.0;
  cfg.gen.slack_factor = 4.0;
  cfg.gen.heterogeneity = 8.0;
  cfg.gen.churn_rate = 0.0005;
  cfg.gen.obs_noise = 1.0;
  cfg.gen.strategy.kind = GraphStrategy::Kind::DynamicAdaptive;
  cfg.gen.strategy.k = 5;
  cfg.gen.strategy.edge_count = 30;
  cfg.scenarios_per_seed = 16;

  cfg.dims = Dims{};  // 8 -> 16 x2 layers, d_task 4

  cfg.train_cfg.lr = 0.02;
  cfg.train_cfg.momentum = 0.9;
  cfg.train_cfg.grad_clip_norm = 5.0;
  cfg.train_cfg.batch_snapshots = 8;
  cfg.train_cfg.max_steps = 1500;
  cfg.train_cfg.eval_every = 75;
  cfg.train_cfg.lambda_class = 0.45;

  cfg.link.bandwidth_mbps = 50.0;
  cfg.link.base_latency_ms = 0.0;
  cfg.sim.round_interval_ms = 10.0;
  cfg.sim.round_budget_ms = 5.0;
  return cfg;
}

Prepared prepare(const BenchmarkConfig& cfg, uint64_t seed) {
  std::vector<Scenario> raw;
  for (int i = 0; i < cfg.scenarios_per_seed; ++i)
    raw.push_back(generate(cfg.gen, derive_seed(seed, static_cast<uint64_t>(i))));
  SplitResult sp = split(std::move(raw), cfg.split_ratios, derive_seed(seed, 500));

  Prepared p;
  p.stats = compute_norm_stats(sp.train);
  for (auto& s : sp.train) p.train_s.push_back(preprocess(s, p.stats));
  for (auto& s : sp.val) p.val_s.push_back(preprocess(s, p.stats));
  for (auto& s : sp.test) p.test_s.push_back(preprocess(s, p.stats));
  p.train_items = build_dataset(p.train_s);
  p.val_items = build_dataset(p.val_s);

  TrainConfig tc = cfg.train_cfg;
  tc.seed = derive_seed(seed, 600);
  ModelParams init = model_init(cfg.dims, derive_seed(seed, 700));
  p.trained = train(p.train_items, p.val_items, init, tc);
  return p;
}

MetricsReport evaluate_policy(const std::vector<Scenario>& test,
                              const PolicySpec& policy, const LinkModel& link,
                              const SimConfig& sim) {
  if (test.empty()) throw DataError("evaluate_policy: empty test set");
  MetricsReport agg;
  long total = 0, completed = 0;
  double lat_sum = 0.0;
  double lb = 0.0, eff = 0.0, pa = 0.0;
  long missed = 0, failed = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    SimConfig sc = sim;
    sc.seed = derive_seed(sim.seed, i);
    MetricsReport m = run(test[i], policy, link, sc);
    total += m.tasks_total;
    completed += m.tasks_completed;
    missed += m.tasks_missed;
    failed += m.tasks_failed;
    if (m.avg_latency_ms)
      lat_sum += *m.avg_latency_ms * static_cast<double>(m.tasks_completed);
    lb += m.load_balance_index;
    eff += m.transmission_efficiency;
    pa += m.perception_accuracy;
  }
  agg.tasks_total = total;
  agg.tasks_completed = completed;
  agg.tasks_missed = missed;
  agg.tasks_failed = failed;
  agg.completion_rate =
      total == 0 ? 1.0 : static_cast<double>(completed) / static_cast<double>(total);
  if (completed > 0) agg.avg_latency_ms = lat_sum / static_cast<double>(completed);
  double k = static_cast<double>(test.size());
  agg.load_balance_index = lb / k;
  agg.transmission_efficiency = eff / k;
  agg.perception_accuracy = pa / k;
  return agg;
}

static MetricsReport mean_report(const std::vector<MetricsReport>& rs) {
  MetricsReport m;
  double k = static_cast<double>(rs.size());
  double cr = 0, lb = 0, eff = 0, pa = 0, lat = 0;
  long lat_n = 0;
  for (const auto& r : rs) {
    cr += r.completion_rate;
    lb += r.load_balance_index;
    eff += r.transmission_efficiency;
    pa += r.perception_accuracy;
    if (r.avg_latency_ms) {
      lat += *r.avg_latency_ms;
      ++lat_n;
    }
    m.tasks_total += r.tasks_total;
    m.tasks_completed += r.tasks_completed;
  }
  m.completion_rate = cr / k;
  m.load_balance_index = lb / k;
  m.transmission_efficiency = eff / k;
  m.perception_accuracy = pa / k;
  if (lat_n > 0) m.avg_latency_ms = lat / static_cast<double>(lat_n);
  return m;
}

static MetricsReport std_report(const std::vector<MetricsReport>& rs,
                                const MetricsReport& mean) {
  MetricsReport m;
  double k = static_cast<double>(rs.size());
  double cr = 0, lb = 0, eff = 0, pa = 0, lat = 0;
  for (const auto& r : rs) {
    cr += std::pow(r.completion_rate - mean.completion_rate, 2);
    lb += std::pow(r.load_balance_index - mean.load_balance_index, 2);
    eff += std::pow(r.transmission_efficiency - mean.transmission_efficiency, 2);
    pa += std::pow(r.perception_accuracy - mean.perception_accuracy, 2);
    if (r.avg_latency_ms && mean.avg_latency_ms)
      lat += std::pow(*r.avg_latency_ms - *mean.avg_latency_ms, 2);
  }
  m.completion_rate = std::sqrt(cr / k);
  m.load_balance_index = std::sqrt(lb / k);
  m.transmission_efficiency = std::sqrt(eff / k);
  m.perception_accuracy = std::sqrt(pa / k);
  if (mean.avg_latency_ms) m.avg_latency_ms = std::sqrt(lat / k);
  return m;
}

CompareResult run_compare_schedulers(const BenchmarkConfig& cfg,
                                     const std::vector<PolicyKind>& policies,
                                     const std::vector<uint64_t>& seeds) {
  if (policies.empty() || seeds.empty())
    throw ConfigError("compare-schedulers: empty policy or seed list");

  std::vector<Prepared> prepared;
  for (uint64_t s : seeds) prepared.push_back(prepare(cfg, s));

  CompareResult res;
  std::ostringstream csv;
  csv << metrics_csv_header() << "\n";
  res.per_seed.resize(policies.size());
  for (size_t pi = 0; pi < policies.size(); ++pi) {
    for (size_t si = 0; si < seeds.size(); ++si) {
      PolicySpec spec;
      spec.kind = policies[pi];
      spec.params = &prepared[si].trained.params;
      spec.norm = &prepared[si].stats;
      SimConfig sc = cfg.sim;
      sc.seed = derive_seed(seeds[si], 42);
      MetricsReport m =
          evaluate_policy(prepared[si].test_s, spec, cfg.link, sc);
      res.per_seed[pi].push_back(m);
      csv << metrics_csv_row("seed" + std::to_string(seeds[si]),
                             policy_name(policies[pi]),
                             cfg.link.bandwidth_mbps, m)
          << "\n";
    }
    MetricsReport mean = mean_report(res.per_seed[pi]);
    MetricsReport sd = std_report(res.per_seed[pi], mean);
    csv << metrics_csv_row("summary_mean", policy_name(policies[pi]),
                           cfg.link.bandwidth_mbps, mean)
        << "\n";
    csv << metrics_csv_row("summary_std", policy_name(policies[pi]),
                           cfg.link.bandwidth_mbps, sd)
        << "\n";
    res.means.push_back({policy_name(policies[pi]), mean});
  }
  res.csv = csv.str();
  return res;
}

SweepResult run_sweep_bandwidth(const BenchmarkConfig& cfg,
                                const std::vector<double>& bandwidths_mbps,
                                const std::vector<uint64_t>& seeds) {
  if (bandwidths_mbps.empty() || seeds.empty())
    throw ConfigError("sweep-bandwidth: empty bandwidth or seed list");

  SweepResult res;
  std::ostringstream csv;
  csv << metrics_csv_header() << "\n";
  for (uint64_t seed : seeds) {
    Prepared p = prepare(cfg, seed);
    PolicySpec spec;
    spec.kind = PolicyKind::Gnn;
    spec.params = &p.trained.params;
    spec.norm = &p.stats;
    std::vector<MetricsReport> row;
    for (double bw : bandwidths_mbps) {
      LinkModel link = cfg.link;
      link.bandwidth_mbps = bw;
      SimConfig sc = cfg.sim;
      sc.seed = derive_seed(seed, 42);
      MetricsReport m = evaluate_policy(p.test_s, spec, link, sc);
      row.push_back(m);
      csv << metrics_csv_row("seed" + std::to_string(seed), "gnn", bw, m)
          << "\n";
    }
    res.cells.push_back(std::move(row));
  }
  res.csv = csv.str();
  return res;
}

StrategyResult run_compare_graph_strategies(
    const BenchmarkConfig& cfg, const std::vector<GraphStrategy>& strategies,
    const std::vector<uint64_t>& seeds) {
  if (strategies.empty() || seeds.empty())
    throw ConfigError("compare-graph-strategies: empty strategy or seed list");

  StrategyResult res;
  std::ostringstream csv;
  csv << "strategy,seed,final_val_perception_accuracy,"
         "final_val_assignment_accuracy,convergence_steps\n";
  char buf[160];
  for (const auto& st : strategies) {
    for (uint64_t seed : seeds) {
      BenchmarkConfig c = cfg;
      c.gen.strategy = st;
      Prepared p = prepare(c, seed);
      StrategyCell cell;
      cell.strategy = strategy_name(st.kind);
      cell.seed = seed;
      cell.final_val_perception_accuracy =
          p.trained.curve.back().val_perception_accuracy;
      cell.final_val_assignment_accuracy =
          p.trained.curve.back().val_assignment_accuracy;
      cell.convergence = convergence_steps(p.trained.curve);
      std::snprintf(buf, sizeof(buf), "%s,%llu,%.6f,%.6f,",
                    cell.strategy.c_str(),
                    static_cast<unsigned long long>(seed),
                    cell.final_val_perception_accuracy,
                    cell.final_val_assignment_accuracy);
      csv << buf;
      if (cell.convergence) csv << *cell.convergence;
      csv << "\n";
      res.cells.push_back(std::move(cell));
    }
  }
  res.csv = csv.str();
  return res;
}

}  // namespace dsched
