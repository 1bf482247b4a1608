#pragma once

#include <functional>
#include <vector>

#include "dsched/gnn.hpp"

namespace dsched {

struct Task {
  int id = 0;
  double arrival_t = 0.0;  // ms
  double size = 1.0;       // work units
  double deadline = 0.0;   // ms, > arrival_t
  int origin = 0;          // node the request enters through
  std::vector<double> feature;  // d_task entries
};

enum class LoadClass { Underloaded = 0, Normal = 1, Overloaded = 2 };

struct Assignment {
  int task_id = 0;
  int node_id = 0;
  std::vector<double> scores;  // probability over nodes, zero on inactive
};

/// Masked softmax over per-node assignment logits
///   logit_i = W_assign . concat(z_i, task.feature)
/// Inactive nodes get zero probability.
std::vector<double> score_assignment(const Matrix& z, const Task& task,
                                     const PolicyParams& p,
                                     const std::vector<char>& active);

/// Argmax with ties to the lowest node id.
int select_node(const std::vector<double>& scores);

struct LoadClassification {
  LoadClass cls;
  std::vector<double> probs;  // 3 entries
};

LoadClassification classify_load(std::span<const double> z_i,
                                 const PolicyParams& p);

/// Read-only view of the scheduling-relevant simulator state, so the
/// baselines stay decoupled from the event loop internals.
struct SchedNodeView {
  int id = 0;
  bool active = false;
  double capacity = 1.0;
  double queue_work = 0.0;       // committed unfinished work units
  double queue_drain_ms = 0.0;   // time until the current queue empties
};

struct SchedView {
  std::vector<SchedNodeView> nodes;
  // path delay origin -> node in ms; +inf when unreachable
  std::function<double(int, int)> path_delay;
};

struct RoundRobinState {
  int cursor = -1;  // last id handed out
};

int baseline_round_robin(const SchedView& view, RoundRobinState& rr);
int baseline_random(const SchedView& view, Rng& rng);
int baseline_least_loaded(const SchedView& view);
int baseline_greedy_latency(const SchedView& view, const Task& task);

}  // namespace dsched
