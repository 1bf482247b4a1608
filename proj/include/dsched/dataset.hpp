#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dsched/graph.hpp"
#include "dsched/scheduler.hpp"

namespace dsched {

// Trailing window for the load-class ground truth, and its thresholds.
inline constexpr double kClassWindowMs = 800.0;

inline int load_class_of(double utilization) {
  if (utilization < 1.0 / 3.0) return 0;  // underloaded
  if (utilization > 2.0 / 3.0) return 2;  // overloaded
  return 1;                               // normal
}

struct RawState {
  double queue_len = 0.0;
  double cpu_capacity = 1.0;
  double mem_free_frac = 1.0;
  double recent_latency_ms = 0.0;
  bool active = true;
};

struct NodeRecord {
  int id = 0;
  RawState raw;
  std::vector<double> enc;  // d0 entries once preprocessed
};

struct SnapshotLabels {
  bool present = false;
  std::vector<std::pair<int, int>> assignments;  // (task_id, oracle node)
  std::vector<int> classes;                      // per node, 0/1/2
};

struct Snapshot {
  double t = 0.0;
  std::vector<NodeRecord> nodes;
  EdgeList edges;
  std::vector<Task> tasks;  // arrivals within [t, t + interval)
  SnapshotLabels labels;
};

struct ScenarioMeta {
  int version = 1;
  int n_nodes = 0;
  int d0 = 8;
  int d_task = 4;
  uint64_t seed = 0;
  GraphStrategy strategy;
  double duration_ms = 0.0;
  double snapshot_interval_ms = 50.0;
};

struct Scenario {
  ScenarioMeta meta;
  std::vector<Snapshot> snapshots;
};

struct NormStats {
  // order: queue_len, cpu_capacity, mem_free_frac, recent_latency_ms
  std::array<double, 4> mean{};
  std::array<double, 4> stddev{};
};

struct GenConfig {
  int n_nodes = 20;
  double duration_ms = 2000.0;
  double snapshot_interval_ms = 50.0;
  double arrival_rate = 0.08;   // tasks per ms
  double mean_task_size = 20.0; // work units
  double slack_factor = 4.0;    // deadline = arrival + slack * size / median cap
  double heterogeneity = 8.0;   // capacities log-uniform over [1, heterogeneity]
  double churn_rate = 0.0005;   // deactivation events per ms
  double obs_noise = 0.5;       // measurement noise on observed raw fields
  double gen_bandwidth_mbps = 50.0;
  double gen_base_latency_ms = 0.5;
  GraphStrategy strategy;
  bool labels = true;
};

/// Synthetic scenario fully determined by (config, seed). Queue dynamics
/// come from an internal closed-form simulation driven by the brute-force
/// oracle policy, which also emits the imitation labels.
Scenario generate(const GenConfig& config, uint64_t seed);

/// z-score per field against training stats, clamped to [-3, 3]; inactive
/// nodes map to the zero vector. Layout: (queue, capacity, mem, latency,
/// active_flag, 0, 0, 0).
std::vector<double> encode_state(const RawState& raw, const NormStats& stats);

NormStats compute_norm_stats(const std::vector<Scenario>& training_scenarios);

/// Drops never-active nodes (densely re-indexing), removes dangling and
/// duplicate edges, and fills encoded features. Idempotent.
Scenario preprocess(const Scenario& s, const NormStats& stats);

struct SplitResult {
  std::vector<Scenario> train, val, test;
};

SplitResult split(std::vector<Scenario> scenarios,
                  std::array<double, 3> ratios, uint64_t seed);

// JSONL: meta line followed by one line per snapshot.
std::string scenario_to_jsonl(const Scenario& s);
Scenario scenario_from_jsonl(const std::string& text);
void save_scenario(const std::string& path, const Scenario& s);
Scenario load_scenario(const std::string& path);

}  // namespace dsched
