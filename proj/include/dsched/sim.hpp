#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsched/dataset.hpp"
#include "dsched/gnn.hpp"
#include "dsched/scheduler.hpp"

namespace dsched {

struct LinkModel {
  double bandwidth_mbps = 50.0;
  double base_latency_ms = 0.0;
  static constexpr double bytes_per_feature = 8.0;
};

/// Per-edge transfer time in ms. Mbps converts to bits per ms.
inline double link_delay(const LinkModel& link, double payload_bytes) {
  return link.base_latency_ms +
         payload_bytes * 8.0 / (link.bandwidth_mbps * 1000.0);
}

struct SimConfig {
  double round_interval_ms = 10.0;
  double round_budget_ms = 5.0;
  uint64_t seed = 0;
};

enum class PolicyKind { Gnn, RoundRobin, Random, LeastLoaded, GreedyLatency, Oracle };

const char* policy_name(PolicyKind k);
PolicyKind policy_from_name(const std::string& s);

struct PolicySpec {
  PolicyKind kind = PolicyKind::LeastLoaded;
  const ModelParams* params = nullptr;  // required for Gnn
  const NormStats* norm = nullptr;      // required for Gnn
};

struct MetricsReport {
  double completion_rate = 1.0;
  std::optional<double> avg_latency_ms;
  double load_balance_index = 0.0;
  double transmission_efficiency = 1.0;
  double perception_accuracy = 0.0;
  long tasks_total = 0;
  long tasks_completed = 0;
  long tasks_missed = 0;  // ran past their deadline
  long tasks_failed = 0;  // never assigned or unreachable
};

std::string metrics_to_json(const MetricsReport& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& scenario_id,
                            const std::string& policy, double bandwidth_mbps,
                            const MetricsReport& m);

/// Coefficient of variation (population std / mean) of busy fractions;
/// 0 when the mean is 0.
double compute_load_balance_index(const std::vector<double>& busy_fractions);

// --- brute-force oracle ------------------------------------------------------

struct InFlightWork {
  double enq_t = 0.0;
  double size = 0.0;
  long seq = 0;  // FIFO tie-break for equal enqueue times
};

struct OracleNode {
  int id = 0;
  bool active = false;
  double capacity = 1.0;
  double free_at = 0.0;
  std::vector<InFlightWork> in_flight;  // assigned, still in transfer
};

struct OracleState {
  double now = 0.0;
  std::vector<OracleNode> nodes;
  std::function<double(int, int)> path_delay;  // +inf when unreachable
};

/// Tries every active node: clones the node's queue, enqueues the task
/// after its transfer delay, and replays the FIFO service order until the
/// task finishes. Returns the node minimizing (missed_deadline,
/// finish_time), ties to the lowest id.
int oracle_assignment(const OracleState& st, const Task& task);

/// Deterministic discrete-event run of one (preprocessed) scenario.
MetricsReport run(const Scenario& scenario, const PolicySpec& policy,
                  const LinkModel& link, const SimConfig& cfg);

}  // namespace dsched
