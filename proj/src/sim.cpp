#include "dsched/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include "json.hpp"

namespace dsched {

const char* policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::Gnn: return "gnn";
    case PolicyKind::RoundRobin: return "round_robin";
    case PolicyKind::Random: return "random";
    case PolicyKind::LeastLoaded: return "least_loaded";
    case PolicyKind::GreedyLatency: return "greedy_latency";
    case PolicyKind::Oracle: return "oracle";
  }
  return "?";
}

PolicyKind policy_from_name(const std::string& s) {
  if (s == "gnn") return PolicyKind::Gnn;
  if (s == "round_robin") return PolicyKind::RoundRobin;
  if (s == "random") return PolicyKind::Random;
  if (s == "least_loaded") return PolicyKind::LeastLoaded;
  if (s == "greedy_latency") return PolicyKind::GreedyLatency;
  if (s == "oracle") return PolicyKind::Oracle;
  throw ConfigError("unknown policy: " + s);
}

double compute_load_balance_index(const std::vector<double>& busy_fractions) {
  if (busy_fractions.empty())
    throw std::invalid_argument("load balance index of empty vector");
  double mean = 0.0;
  for (double v : busy_fractions) mean += v;
  mean /= static_cast<double>(busy_fractions.size());
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : busy_fractions) var += (v - mean) * (v - mean);
  var /= static_cast<double>(busy_fractions.size());
  return std::sqrt(var) / mean;
}

int oracle_assignment(const OracleState& st, const Task& task) {
  int best = -1;
  bool best_missed = true;
  double best_finish = std::numeric_limits<double>::infinity();
  bool any_active = false;
  for (const auto& nd : st.nodes) {
    if (!nd.active) continue;
    any_active = true;
    double delay = st.path_delay(task.origin, nd.id);
    bool missed = true;
    double finish = std::numeric_limits<double>::infinity();
    if (std::isfinite(delay)) {
      // clone the queue and replay FIFO order including in-transit work
      std::vector<InFlightWork> q = nd.in_flight;
      q.push_back({st.now + delay, task.size, std::numeric_limits<long>::max()});
      std::sort(q.begin(), q.end(), [](const InFlightWork& a, const InFlightWork& b) {
        if (a.enq_t != b.enq_t) return a.enq_t < b.enq_t;
        return a.seq < b.seq;
      });
      double free = nd.free_at;
      for (const auto& w : q) {
        double start = std::max(w.enq_t, free);
        free = start + w.size / nd.capacity;
        if (w.seq == std::numeric_limits<long>::max()) finish = free;
      }
      missed = finish > task.deadline;
    }
    if (best < 0 || std::make_pair(missed, finish) <
                        std::make_pair(best_missed, best_finish)) {
      best = nd.id;
      best_missed = missed;
      best_finish = finish;
    }
  }
  if (!any_active) throw SchedulingError("oracle: no active node");
  return best;
}

namespace {

enum EvType { EvSnapshot = 0, EvRound = 1, EvCompletion = 2, EvEnqueue = 3, EvArrival = 4 };

struct Event {
  double t;
  int type;
  long seq;
  int a = 0;       // snapshot index / node id
  size_t idx = 0;  // task index
  bool operator>(const Event& o) const {
    if (t != o.t) return t > o.t;
    if (type != o.type) return type > o.type;
    return seq > o.seq;
  }
};

struct SimNode {
  double capacity = 1.0;
  bool active = true;
  double free_at = 0.0;
  double committed_work = 0.0;
  int queued = 0;  // enqueued, not yet completed
  std::vector<InFlightWork> in_flight;
  std::vector<std::pair<double, double>> busy;  // service intervals
  double busy_total = 0.0;
};

constexpr double kTaskPayloadBytes = 256.0;

}  // namespace

MetricsReport run(const Scenario& scenario, const PolicySpec& policy,
                  const LinkModel& link, const SimConfig& cfg) {
  if (scenario.snapshots.empty()) throw DataError("run: scenario has no snapshots");
  if (policy.kind == PolicyKind::Gnn && (!policy.params || !policy.norm))
    throw ConfigError("run: gnn policy requires model params and norm stats");
  int n = scenario.meta.n_nodes;
  if (n < 1) throw DataError("run: empty system");

  std::vector<SimNode> nodes(static_cast<size_t>(n));
  for (const auto& rec : scenario.snapshots.front().nodes) {
    if (rec.id < 0 || rec.id >= n) throw DataError("run: node id out of range");
    nodes[static_cast<size_t>(rec.id)].capacity = rec.raw.cpu_capacity;
  }

  // all tasks, flat, indexed
  std::vector<Task> tasks;
  for (const auto& snap : scenario.snapshots)
    for (const auto& tk : snap.tasks) tasks.push_back(tk);

  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> pq;
  long seq = 0;
  for (size_t s = 0; s < scenario.snapshots.size(); ++s)
    pq.push({scenario.snapshots[s].t, EvSnapshot, seq++, static_cast<int>(s)});
  for (size_t i = 0; i < tasks.size(); ++i)
    pq.push({tasks[i].arrival_t, EvArrival, seq++, 0, i});
  bool use_gnn = policy.kind == PolicyKind::Gnn;
  if (use_gnn)
    for (double t = 0.0; t <= scenario.meta.duration_ms; t += cfg.round_interval_ms)
      pq.push({t, EvRound, seq++});

  // routing adjacency for the current snapshot
  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  EdgeList cur_edges;
  size_t cur_snap = 0;
  auto rebuild_adj = [&](const EdgeList& edges) {
    cur_edges = edges;
    for (auto& v : adj) v.clear();
    for (auto [a, b] : edges) {
      adj[static_cast<size_t>(a)].push_back(b);
      adj[static_cast<size_t>(b)].push_back(a);
    }
    for (auto& v : adj) std::sort(v.begin(), v.end());
  };
  auto apply_snapshot = [&](size_t s) {
    cur_snap = s;
    const Snapshot& snap = scenario.snapshots[s];
    rebuild_adj(snap.edges);
    for (const auto& rec : snap.nodes)
      nodes[static_cast<size_t>(rec.id)].active = rec.raw.active;
  };
  apply_snapshot(0);

  double per_edge_task_delay = link_delay(link, kTaskPayloadBytes);
  auto path_delay = [&](int from, int to) -> double {
    if (from == to) return 0.0;
    std::vector<int> dist(static_cast<size_t>(n), -1);
    std::deque<int> q{from};
    dist[static_cast<size_t>(from)] = 0;
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (int v : adj[static_cast<size_t>(u)]) {
        if (dist[static_cast<size_t>(v)] >= 0) continue;
        dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
        q.push_back(v);
      }
    }
    int hops = dist[static_cast<size_t>(to)];
    if (hops < 0) return std::numeric_limits<double>::infinity();
    return hops * per_edge_task_delay;
  };

  // perception state
  int d_model = use_gnn ? policy.params->dims.d : 0;
  Matrix z(n, d_model);
  bool z_valid = false;
  // stale cache: key = (layer * n + sender) * n + receiver
  std::map<long, std::vector<double>> stale_cache;
  long fresh_total = 0, required_total = 0;
  long percep_correct = 0, percep_total = 0;

  Rng rng(cfg.seed);
  RoundRobinState rr;

  long completed = 0, missed = 0, failed = 0;
  double latency_sum = 0.0;
  double end_clock = scenario.meta.duration_ms;

  auto make_sched_view = [&](double now) {
    SchedView view;
    for (int i = 0; i < n; ++i) {
      const SimNode& nd = nodes[static_cast<size_t>(i)];
      view.nodes.push_back({i, nd.active, nd.capacity, nd.committed_work,
                            std::max(0.0, nd.free_at - now)});
    }
    view.path_delay = path_delay;
    return view;
  };

  auto live_raw = [&](int i, double now) {
    const SimNode& nd = nodes[static_cast<size_t>(i)];
    RawState raw;
    raw.active = nd.active;
    raw.cpu_capacity = nd.capacity;
    raw.queue_len = nd.queued + static_cast<int>(nd.in_flight.size());
    raw.recent_latency_ms = std::max(0.0, nd.free_at - now);
    raw.mem_free_frac = 1.0;
    for (const auto& rec : scenario.snapshots[cur_snap].nodes)
      if (rec.id == i) raw.mem_free_frac = rec.raw.mem_free_frac;
    return raw;
  };

  // Last state report received from each node. Queue and latency figures
  // travel over the same links as everything else, so they only refresh when
  // a report fits the round budget; liveness and capacity are cheap
  // control-plane metadata and stay current.
  std::vector<RawState> obs_raw(static_cast<size_t>(n));
  auto perception_round = [&](double now) {
    const ModelParams& mp = *policy.params;
    double report_delay = link_delay(link, mp.dims.d0 * LinkModel::bytes_per_feature);
    bool report_fresh = report_delay <= cfg.round_budget_ms;
    Matrix H0(n, mp.dims.d0);
    std::vector<char> act(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      RawState live = live_raw(i, now);
      RawState& raw = obs_raw[static_cast<size_t>(i)];
      if (report_fresh) raw = live;
      raw.active = live.active;
      raw.cpu_capacity = live.cpu_capacity;
      act[static_cast<size_t>(i)] = raw.active ? 1 : 0;
      std::vector<double> enc = encode_state(raw, *policy.norm);
      for (int c = 0; c < mp.dims.d0; ++c) H0(i, c) = enc[static_cast<size_t>(c)];
    }
    SystemGraph g = SystemGraph::build(n, cur_edges, H0, act);

    Matrix H = H0;
    for (int l = 0; l < mp.dims.L; ++l) {
      int d_in = mp.layer_in_dim(l);
      double delay = link_delay(link, d_in * LinkModel::bytes_per_feature);
      bool fresh = delay <= cfg.round_budget_ms;
      // refresh the cache for every delivered directed edge, then aggregate
      // from the cache (fresh deliveries just wrote the current state)
      long layer_fresh = 0;
      for (auto [a, b] : cur_edges)
        for (auto [snd, rcv] : {std::pair{a, b}, std::pair{b, a}}) {
          ++required_total;
          if (fresh) {
            long key = (static_cast<long>(l) * n + snd) * n + rcv;
            stale_cache[key] = std::vector<double>(H.row(snd).begin(),
                                                   H.row(snd).end());
            ++layer_fresh;
          }
        }
      fresh_total += layer_fresh;
      std::vector<double> zero(static_cast<size_t>(d_in), 0.0);
      auto nbr = [&](int receiver, int sender) -> std::span<const double> {
        long key = (static_cast<long>(l) * n + sender) * n + receiver;
        auto it = stale_cache.find(key);
        if (it == stale_cache.end()) return zero;
        return it->second;
      };
      auto [Hn, pre] = gcn_layer_forward_mixed(g, H, mp.layers[static_cast<size_t>(l)], nbr);
      H = std::move(Hn);
    }
    Matrix a = global_attention(H, mp.attention);
    z = fuse(H, a, mp.fusion);
    z_valid = true;

    // perception accuracy vs. live trailing-window utilization
    double lo = std::max(0.0, now - kClassWindowMs);
    double w = std::max(now - lo, 1e-9);
    for (int i = 0; i < n; ++i) {
      const SimNode& nd = nodes[static_cast<size_t>(i)];
      if (!nd.active) continue;
      double busy = 0.0;
      for (auto [s0, s1] : nd.busy)
        busy += std::max(0.0, std::min(s1, now) - std::max(s0, lo));
      int truth = load_class_of(now <= 0.0 ? 0.0 : std::min(busy / w, 1.0));
      auto cl = classify_load(z.row(i), mp.policy);
      ++percep_total;
      if (static_cast<int>(cl.cls) == truth) ++percep_correct;
    }
  };

  auto choose_node = [&](const Task& task, double now) -> int {
    switch (policy.kind) {
      case PolicyKind::Gnn: {
        std::vector<char> act(static_cast<size_t>(n), 0);
        for (int i = 0; i < n; ++i)
          act[static_cast<size_t>(i)] = nodes[static_cast<size_t>(i)].active;
        if (!z_valid) z.fill(0.0);
        return select_node(score_assignment(z, task, policy.params->policy, act));
      }
      case PolicyKind::RoundRobin:
        return baseline_round_robin(make_sched_view(now), rr);
      case PolicyKind::Random:
        return baseline_random(make_sched_view(now), rng);
      case PolicyKind::LeastLoaded:
        return baseline_least_loaded(make_sched_view(now));
      case PolicyKind::GreedyLatency:
        return baseline_greedy_latency(make_sched_view(now), task);
      case PolicyKind::Oracle: {
        OracleState st;
        st.now = now;
        for (int i = 0; i < n; ++i) {
          const SimNode& nd = nodes[static_cast<size_t>(i)];
          st.nodes.push_back({i, nd.active, nd.capacity, nd.free_at, nd.in_flight});
        }
        st.path_delay = path_delay;
        return oracle_assignment(st, task);
      }
    }
    throw ConfigError("bad policy kind");
  };

  while (!pq.empty()) {
    Event ev = pq.top();
    pq.pop();
    end_clock = std::max(end_clock, ev.t);
    switch (ev.type) {
      case EvSnapshot:
        apply_snapshot(static_cast<size_t>(ev.a));
        break;
      case EvRound:
        perception_round(ev.t);
        break;
      case EvArrival: {
        const Task& task = tasks[ev.idx];
        int chosen = -1;
        try {
          chosen = choose_node(task, ev.t);
        } catch (const SchedulingError&) {
          ++failed;
          break;
        }
        double delay = path_delay(task.origin, chosen);
        if (!std::isfinite(delay)) {
          ++failed;
          break;
        }
        SimNode& nd = nodes[static_cast<size_t>(chosen)];
        nd.committed_work += task.size;
        long wseq = seq++;
        nd.in_flight.push_back({ev.t + delay, task.size, wseq});
        pq.push({ev.t + delay, EvEnqueue, wseq, chosen, ev.idx});
        break;
      }
      case EvEnqueue: {
        SimNode& nd = nodes[static_cast<size_t>(ev.a)];
        const Task& task = tasks[ev.idx];
        std::erase_if(nd.in_flight,
                      [&](const InFlightWork& w) { return w.seq == ev.seq; });
        double start = std::max(ev.t, nd.free_at);
        double finish = start + task.size / nd.capacity;
        nd.free_at = finish;
        nd.queued += 1;
        nd.busy.push_back({start, finish});
        nd.busy_total += finish - start;
        pq.push({finish, EvCompletion, seq++, ev.a, ev.idx});
        break;
      }
      case EvCompletion: {
        SimNode& nd = nodes[static_cast<size_t>(ev.a)];
        const Task& task = tasks[ev.idx];
        nd.committed_work -= task.size;
        nd.queued -= 1;
        if (ev.t <= task.deadline) {
          ++completed;
          latency_sum += ev.t - task.arrival_t;
        } else {
          ++missed;
        }
        break;
      }
    }
  }

  MetricsReport m;
  m.tasks_total = static_cast<long>(tasks.size());
  m.tasks_completed = completed;
  m.completion_rate =
      m.tasks_total == 0 ? 1.0
                         : static_cast<double>(completed) /
                               static_cast<double>(m.tasks_total);
  if (completed > 0) m.avg_latency_ms = latency_sum / static_cast<double>(completed);
  std::vector<double> busy_fracs;
  for (const auto& nd : nodes)
    busy_fracs.push_back(end_clock > 0 ? nd.busy_total / end_clock : 0.0);
  m.load_balance_index = compute_load_balance_index(busy_fracs);
  m.transmission_efficiency =
      required_total == 0 ? 1.0
                          : static_cast<double>(fresh_total) /
                                static_cast<double>(required_total);
  m.perception_accuracy =
      percep_total == 0 ? 0.0
                        : static_cast<double>(percep_correct) /
                              static_cast<double>(percep_total);
  m.tasks_missed = missed;
  m.tasks_failed = failed;
  return m;
}

std::string metrics_to_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["completion_rate"] = m.completion_rate;
  if (m.avg_latency_ms) j["avg_latency_ms"] = *m.avg_latency_ms;
  else j["avg_latency_ms"] = nullptr;
  j["load_balance_index"] = m.load_balance_index;
  j["transmission_efficiency"] = m.transmission_efficiency;
  j["perception_accuracy"] = m.perception_accuracy;
  j["tasks_total"] = m.tasks_total;
  j["tasks_completed"] = m.tasks_completed;
  return j.dump();
}

std::string metrics_csv_header() {
  return "scenario_id,policy,bandwidth_mbps,completion_rate,avg_latency_ms,"
         "load_balance_index,transmission_efficiency,perception_accuracy,"
         "tasks_total,tasks_completed";
}

static std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string metrics_csv_row(const std::string& scenario_id,
                            const std::string& policy, double bandwidth_mbps,
                            const MetricsReport& m) {
  std::ostringstream out;
  out << scenario_id << ',' << policy << ',' << fmt(bandwidth_mbps) << ','
      << fmt(m.completion_rate) << ','
      << (m.avg_latency_ms ? fmt(*m.avg_latency_ms) : "") << ','
      << fmt(m.load_balance_index) << ',' << fmt(m.transmission_efficiency)
      << ',' << fmt(m.perception_accuracy) << ',' << m.tasks_total << ','
      << m.tasks_completed;
  return out.str();
}

}  // namespace dsched
