#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsched/dataset.hpp"
#include "dsched/sim.hpp"
#include "dsched/trainer.hpp"

namespace dsched {

/// Everything needed to reproduce one experiment cell: scenario generation,
/// splitting, model shape, training, and the evaluation link.
struct BenchmarkConfig {
  GenConfig gen;
  int scenarios_per_seed = 12;
  std::array<double, 3> split_ratios = {0.7, 0.15, 0.15};
  Dims dims;
  TrainConfig train_cfg;
  LinkModel link;
  SimConfig sim;
};

/// The shipped 20-node benchmark (about 2,000 tasks per seed).
BenchmarkConfig default_benchmark();

struct Prepared {
  std::vector<Scenario> train_s, val_s, test_s;  // preprocessed
  NormStats stats;
  std::vector<TrainItem> train_items, val_items;
  TrainResult trained;
};

/// Generates, splits, preprocesses, and trains for one seed. All
/// randomness derives from (cfg, seed).
Prepared prepare(const BenchmarkConfig& cfg, uint64_t seed);

/// Mean metrics over a scenario set (task-weighted completion/latency,
/// scenario-mean for the remaining fields).
MetricsReport evaluate_policy(const std::vector<Scenario>& test,
                              const PolicySpec& policy, const LinkModel& link,
                              const SimConfig& sim);

struct CompareResult {
  // one row per (policy, seed) plus mean/std summary rows
  std::string csv;
  // seed-mean metrics per policy, in input order
  std::vector<std::pair<std::string, MetricsReport>> means;
  std::vector<std::vector<MetricsReport>> per_seed;  // [policy][seed]
};

CompareResult run_compare_schedulers(const BenchmarkConfig& cfg,
                                     const std::vector<PolicyKind>& policies,
                                     const std::vector<uint64_t>& seeds);

struct SweepResult {
  std::string csv;
  // per seed, per bandwidth (in input order)
  std::vector<std::vector<MetricsReport>> cells;
};

SweepResult run_sweep_bandwidth(const BenchmarkConfig& cfg,
                                const std::vector<double>& bandwidths_mbps,
                                const std::vector<uint64_t>& seeds);

struct StrategyCell {
  std::string strategy;
  uint64_t seed = 0;
  double final_val_perception_accuracy = 0.0;
  double final_val_assignment_accuracy = 0.0;
  std::optional<int> convergence;
};

struct StrategyResult {
  std::string csv;
  std::vector<StrategyCell> cells;
};

StrategyResult run_compare_graph_strategies(
    const BenchmarkConfig& cfg, const std::vector<GraphStrategy>& strategies,
    const std::vector<uint64_t>& seeds);

}  // namespace dsched
