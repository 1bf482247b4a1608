#include "dsched/scheduler.hpp"

#include <cmath>
#include <limits>

namespace dsched {

std::vector<double> score_assignment(const Matrix& z, const Task& task,
                                     const PolicyParams& p,
                                     const std::vector<char>& active) {
  int n = z.rows();
  if (static_cast<int>(active.size()) != n)
    throw std::invalid_argument("score_assignment: active mask size");
  int d = z.cols();
  int d_task = static_cast<int>(task.feature.size());
  if (p.W_assign.cols() != d + d_task)
    throw std::invalid_argument("score_assignment: W_assign width");

  std::vector<double> logits(static_cast<size_t>(n),
                             -std::numeric_limits<double>::infinity());
  bool any_active = false;
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (!active[static_cast<size_t>(i)]) continue;
    any_active = true;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += p.W_assign(0, c) * z(i, c);
    for (int c = 0; c < d_task; ++c)
      s += p.W_assign(0, d + c) * task.feature[static_cast<size_t>(c)];
    logits[static_cast<size_t>(i)] = s;
    mx = std::max(mx, s);
  }
  if (!any_active) throw SchedulingError("no active node to assign to");

  std::vector<double> probs(static_cast<size_t>(n), 0.0);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!active[static_cast<size_t>(i)]) continue;
    probs[static_cast<size_t>(i)] = std::exp(logits[static_cast<size_t>(i)] - mx);
    denom += probs[static_cast<size_t>(i)];
  }
  for (double& v : probs) v /= denom;
  return probs;
}

int select_node(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)])
      best = i;
  return best;
}

LoadClassification classify_load(std::span<const double> z_i,
                                 const PolicyParams& p) {
  if (p.W_class.cols() != static_cast<int>(z_i.size()))
    throw std::invalid_argument("classify_load: W_class width");
  std::vector<double> logits = matvec(p.W_class, z_i);
  double mx = std::max({logits[0], logits[1], logits[2]});
  double denom = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (double& v : logits) v /= denom;
  int best = 0;
  for (int c = 1; c < 3; ++c)
    if (logits[static_cast<size_t>(c)] > logits[static_cast<size_t>(best)])
      best = c;
  return {static_cast<LoadClass>(best), std::move(logits)};
}

static void require_active(const SchedView& view) {
  for (const auto& nd : view.nodes)
    if (nd.active) return;
  throw SchedulingError("no active node to assign to");
}

int baseline_round_robin(const SchedView& view, RoundRobinState& rr) {
  require_active(view);
  int n = static_cast<int>(view.nodes.size());
  // next active id strictly after the cursor, wrapping
  for (int step = 1; step <= n; ++step) {
    int cand = (rr.cursor + step) % n;
    if (view.nodes[static_cast<size_t>(cand)].active) {
      rr.cursor = cand;
      return cand;
    }
  }
  throw SchedulingError("no active node to assign to");
}

int baseline_random(const SchedView& view, Rng& rng) {
  require_active(view);
  std::vector<int> ids;
  for (const auto& nd : view.nodes)
    if (nd.active) ids.push_back(nd.id);
  return ids[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(ids.size()) - 1))];
}

int baseline_least_loaded(const SchedView& view) {
  require_active(view);
  int best = -1;
  double best_load = 0.0;
  for (const auto& nd : view.nodes) {
    if (!nd.active) continue;
    double load = nd.queue_work / nd.capacity;
    if (best < 0 || load < best_load) {
      best = nd.id;
      best_load = load;
    }
  }
  return best;
}

int baseline_greedy_latency(const SchedView& view, const Task& task) {
  require_active(view);
  int best = -1;
  double best_finish = 0.0;
  for (const auto& nd : view.nodes) {
    if (!nd.active) continue;
    double finish = nd.queue_drain_ms + task.size / nd.capacity +
                    view.path_delay(task.origin, nd.id);
    if (best < 0 || finish < best_finish) {
      best = nd.id;
      best_finish = finish;
    }
  }
  return best;
}

}  // namespace dsched
