#include "dsched/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dsched {

namespace {

struct ServiceEntry {
  double enq, start, finish;
};

struct GenNode {
  double capacity = 1.0;
  double free_at = 0.0;
  double mem = 1.0;
  std::vector<ServiceEntry> service;
  std::vector<std::pair<double, double>> off;  // deactivation intervals
  bool active_at(double t) const {
    for (auto [a, b] : off)
      if (t >= a && t < b) return false;
    return true;
  }
  double busy_in(double lo, double hi) const {
    double s = 0.0;
    for (const auto& e : service)
      s += std::max(0.0, std::min(e.finish, hi) - std::max(e.start, lo));
    return s;
  }
  // waiting + running tasks present at t
  int queued_at(double t) const {
    int c = 0;
    for (const auto& e : service)
      if (e.enq <= t && e.finish > t) ++c;
    return c;
  }
};

// Feature vector used for knn topology construction inside the generator.
// Fixed scaling keeps it causal (training normalization stats do not exist
// yet at generation time).
std::vector<double> topo_feature(const GenNode& nd, double t, double drain) {
  double lo = std::max(0.0, t - kClassWindowMs);
  double w = std::max(t - lo, 1e-9);
  double busy = t <= 0.0 ? 0.0 : std::min(nd.busy_in(lo, t) / w, 1.0);
  return {3.0 * busy, drain / 300.0, nd.capacity / 8.0,
          nd.active_at(t) ? 1.0 : 0.0};
}

}  // namespace

Scenario generate(const GenConfig& cfg, uint64_t seed) {
  if (cfg.n_nodes < 2) throw ConfigError("generate: n_nodes must be >= 2");
  if (cfg.duration_ms <= 0 || cfg.snapshot_interval_ms <= 0)
    throw ConfigError("generate: bad duration or snapshot interval");
  if (cfg.arrival_rate < 0 || cfg.churn_rate < 0 || cfg.heterogeneity < 1)
    throw ConfigError("generate: bad rates");

  int n = cfg.n_nodes;
  Rng rng(derive_seed(seed, 0));

  std::vector<GenNode> nodes(static_cast<size_t>(n));
  std::vector<double> caps;
  for (auto& nd : nodes) {
    nd.capacity = std::exp(rng.uniform(0.0, std::log(cfg.heterogeneity)));
    nd.mem = rng.uniform(0.2, 1.0);
    caps.push_back(nd.capacity);
  }
  std::sort(caps.begin(), caps.end());
  double median_cap = caps[caps.size() / 2];

  // churn: deactivation intervals
  {
    Rng crng(derive_seed(seed, 1));
    double t = 0.0;
    while (cfg.churn_rate > 0) {
      t += crng.exponential(1.0 / cfg.churn_rate);
      if (t >= cfg.duration_ms) break;
      int v = crng.uniform_int(0, n - 1);
      double dur = crng.exponential(4.0 * cfg.snapshot_interval_ms);
      if (nodes[static_cast<size_t>(v)].active_at(t))
        nodes[static_cast<size_t>(v)].off.push_back({t, t + dur});
    }
  }

  // task arrivals
  std::vector<Task> tasks;
  {
    Rng trng(derive_seed(seed, 2));
    double t = 0.0;
    int id = 0;
    while (cfg.arrival_rate > 0) {
      t += trng.exponential(1.0 / cfg.arrival_rate);
      if (t >= cfg.duration_ms) break;
      Task task;
      task.id = id++;
      task.arrival_t = t;
      task.size = std::clamp(trng.exponential(cfg.mean_task_size),
                             0.05 * cfg.mean_task_size,
                             10.0 * cfg.mean_task_size);
      task.deadline = t + cfg.slack_factor * task.size / median_cap;
      task.origin = trng.uniform_int(0, n - 1);
      task.feature = {task.size / cfg.mean_task_size,
                      (task.deadline - task.arrival_t) / 100.0,
                      task.origin % 2 == 0 ? 1.0 : 0.0,
                      task.origin % 2 == 1 ? 1.0 : 0.0};
      tasks.push_back(std::move(task));
    }
  }

  Scenario sc;
  sc.meta.n_nodes = n;
  sc.meta.seed = seed;
  sc.meta.strategy = cfg.strategy;
  sc.meta.duration_ms = cfg.duration_ms;
  sc.meta.snapshot_interval_ms = cfg.snapshot_interval_ms;

  int n_snaps =
      static_cast<int>(std::ceil(cfg.duration_ms / cfg.snapshot_interval_ms));
  size_t next_task = 0;
  EdgeList frozen_edges;
  Rng obs_rng(derive_seed(seed, 3));
  double per_edge_bits_per_ms = cfg.gen_bandwidth_mbps * 1000.0;
  double task_payload_bits = 256.0 * 8.0;
  double per_edge_delay =
      cfg.gen_base_latency_ms + task_payload_bits / per_edge_bits_per_ms;

  for (int s = 0; s < n_snaps; ++s) {
    double t = s * cfg.snapshot_interval_ms;
    double t_end = std::min(cfg.duration_ms, t + cfg.snapshot_interval_ms);

    // drift the exogenous memory signal
    for (auto& nd : nodes)
      nd.mem = std::clamp(nd.mem + 0.05 * obs_rng.normal(), 0.05, 1.0);

    // topology for this snapshot
    Matrix feats(n, 4);
    for (int i = 0; i < n; ++i) {
      const GenNode& nd = nodes[static_cast<size_t>(i)];
      auto f = topo_feature(nd, t, std::max(0.0, nd.free_at - t));
      for (int c = 0; c < 4; ++c) feats(i, c) = f[static_cast<size_t>(c)];
    }
    EdgeList edges;
    switch (cfg.strategy.kind) {
      case GraphStrategy::Kind::Random:
        edges = construct_topology(cfg.strategy, feats,
                                   derive_seed(seed, 1000 + static_cast<uint64_t>(s)));
        break;
      case GraphStrategy::Kind::StaticKnn:
        if (s == 0) frozen_edges = construct_topology(cfg.strategy, feats, seed);
        edges = frozen_edges;
        break;
      case GraphStrategy::Kind::DynamicAdaptive:
        edges = construct_topology(cfg.strategy, feats, seed);
        break;
    }
    Snapshot snap;
    snap.t = t;
    snap.edges = edges;

    // record observed node states
    for (int i = 0; i < n; ++i) {
      const GenNode& nd = nodes[static_cast<size_t>(i)];
      NodeRecord rec;
      rec.id = i;
      rec.raw.active = nd.active_at(t);
      rec.raw.cpu_capacity = nd.capacity;
      rec.raw.mem_free_frac = nd.mem;
      // measurement noise scales with the signal so it stays meaningful
      // across load regimes; a small floor keeps idle nodes noisy too
      double q = nd.queued_at(t);
      rec.raw.queue_len =
          std::max(0.0, q + cfg.obs_noise * (0.5 + q) * obs_rng.normal());
      double drain = std::max(0.0, nd.free_at - t);
      rec.raw.recent_latency_ms = std::max(
          0.0, drain + cfg.obs_noise * (5.0 + drain) * obs_rng.normal());
      snap.nodes.push_back(std::move(rec));
    }

    // ground-truth load classes from the trailing busy window
    if (cfg.labels) {
      snap.labels.present = true;
      double lo = std::max(0.0, t - kClassWindowMs);
      double w = std::max(t - lo, 1e-9);
      for (int i = 0; i < n; ++i) {
        double util = t <= 0.0
                          ? 0.0
                          : nodes[static_cast<size_t>(i)].busy_in(lo, t) / w;
        snap.labels.classes.push_back(load_class_of(std::min(util, 1.0)));
      }
    }

    // assign the window's arrivals with the brute-force oracle; dispatch is
    // over the full fabric (every node one direct hop from the origin), so
    // queue dynamics depend only on (config, seed) and not on which
    // state-exchange overlay was requested
    while (next_task < tasks.size() && tasks[next_task].arrival_t < t_end) {
      Task& task = tasks[next_task];
      ++next_task;
      double at = task.arrival_t;
      int best = -1;
      bool best_missed = true;
      double best_finish = std::numeric_limits<double>::infinity();
      for (int v = 0; v < n; ++v) {
        GenNode& nd = nodes[static_cast<size_t>(v)];
        if (!nd.active_at(at)) continue;
        int hops = v == task.origin ? 0 : 1;
        double enq = at + hops * per_edge_delay;
        double start = std::max(enq, nd.free_at);
        double finish = start + task.size / nd.capacity;
        bool missed = finish > task.deadline;
        if (best < 0 || std::make_pair(missed, finish) <
                            std::make_pair(best_missed, best_finish)) {
          best = v;
          best_missed = missed;
          best_finish = finish;
        }
      }
      if (best >= 0) {
        GenNode& nd = nodes[static_cast<size_t>(best)];
        int hops = best == task.origin ? 0 : 1;
        double enq = at + hops * per_edge_delay;
        double start = std::max(enq, nd.free_at);
        double finish = start + task.size / nd.capacity;
        nd.service.push_back({enq, start, finish});
        nd.free_at = finish;
        if (cfg.labels) snap.labels.assignments.push_back({task.id, best});
      }
      snap.tasks.push_back(task);
    }

    sc.snapshots.push_back(std::move(snap));
  }
  return sc;
}

std::vector<double> encode_state(const RawState& raw, const NormStats& stats) {
  std::vector<double> v(8, 0.0);
  if (!raw.active) return v;
  std::array<double, 4> fields = {raw.queue_len, raw.cpu_capacity,
                                  raw.mem_free_frac, raw.recent_latency_ms};
  for (int f = 0; f < 4; ++f) {
    double sd = stats.stddev[static_cast<size_t>(f)];
    double z = sd > 0.0
                   ? (fields[static_cast<size_t>(f)] -
                      stats.mean[static_cast<size_t>(f)]) /
                         sd
                   : 0.0;
    v[static_cast<size_t>(f)] = std::clamp(z, -3.0, 3.0);
  }
  v[4] = 1.0;  // active flag
  return v;
}

NormStats compute_norm_stats(const std::vector<Scenario>& scenarios) {
  NormStats st;
  std::array<double, 4> sum{}, sumsq{};
  long long count = 0;
  for (const auto& sc : scenarios)
    for (const auto& snap : sc.snapshots)
      for (const auto& rec : snap.nodes) {
        if (!rec.raw.active) continue;
        std::array<double, 4> f = {rec.raw.queue_len, rec.raw.cpu_capacity,
                                   rec.raw.mem_free_frac,
                                   rec.raw.recent_latency_ms};
        for (int i = 0; i < 4; ++i) {
          sum[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
          sumsq[static_cast<size_t>(i)] +=
              f[static_cast<size_t>(i)] * f[static_cast<size_t>(i)];
        }
        ++count;
      }
  if (count == 0) throw DataError("compute_norm_stats: no active records");
  for (int i = 0; i < 4; ++i) {
    double m = sum[static_cast<size_t>(i)] / static_cast<double>(count);
    double var =
        std::max(0.0, sumsq[static_cast<size_t>(i)] / static_cast<double>(count) -
                          m * m);
    st.mean[static_cast<size_t>(i)] = m;
    st.stddev[static_cast<size_t>(i)] = std::sqrt(var);
  }
  return st;
}

Scenario preprocess(const Scenario& s, const NormStats& stats) {
  int n = s.meta.n_nodes;
  std::vector<char> ever_active(static_cast<size_t>(n), 0);
  for (const auto& snap : s.snapshots)
    for (const auto& rec : snap.nodes)
      if (rec.raw.active) ever_active[static_cast<size_t>(rec.id)] = 1;

  std::vector<int> remap(static_cast<size_t>(n), -1);
  int kept = 0;
  for (int i = 0; i < n; ++i)
    if (ever_active[static_cast<size_t>(i)]) remap[static_cast<size_t>(i)] = kept++;
  if (kept < 2) throw DataError("preprocess: fewer than 2 nodes remain");

  Scenario out;
  out.meta = s.meta;
  out.meta.n_nodes = kept;
  for (const auto& snap : s.snapshots) {
    Snapshot ns;
    ns.t = snap.t;
    for (const auto& rec : snap.nodes) {
      int nid = remap[static_cast<size_t>(rec.id)];
      if (nid < 0) continue;
      NodeRecord r = rec;
      r.id = nid;
      r.enc = encode_state(r.raw, stats);
      ns.nodes.push_back(std::move(r));
    }
    std::sort(ns.nodes.begin(), ns.nodes.end(),
              [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
    std::set<std::pair<int, int>> dedup;
    for (auto [a, b] : snap.edges) {
      if (a < 0 || b < 0 || a >= n || b >= n || a == b) continue;
      int ra = remap[static_cast<size_t>(a)];
      int rb = remap[static_cast<size_t>(b)];
      if (ra < 0 || rb < 0) continue;
      dedup.insert({std::min(ra, rb), std::max(ra, rb)});
    }
    ns.edges.assign(dedup.begin(), dedup.end());
    for (const auto& task : snap.tasks) {
      Task tk = task;
      int ro = task.origin >= 0 && task.origin < n
                   ? remap[static_cast<size_t>(task.origin)]
                   : -1;
      tk.origin = ro >= 0 ? ro : 0;
      ns.tasks.push_back(std::move(tk));
    }
    ns.labels.present = snap.labels.present;
    if (snap.labels.present) {
      for (auto [tid, node] : snap.labels.assignments) {
        int rn = remap[static_cast<size_t>(node)];
        if (rn >= 0) ns.labels.assignments.push_back({tid, rn});
      }
      for (int i = 0; i < n; ++i)
        if (remap[static_cast<size_t>(i)] >= 0)
          ns.labels.classes.push_back(snap.labels.classes[static_cast<size_t>(i)]);
    }
    out.snapshots.push_back(std::move(ns));
  }
  return out;
}

SplitResult split(std::vector<Scenario> scenarios, std::array<double, 3> ratios,
                  uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 ||
      std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("split: ratios must be positive and sum to 1");
  if (scenarios.size() < 3) throw DataError("split: need at least 3 scenarios");

  std::vector<size_t> order(scenarios.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  size_t n = scenarios.size();
  size_t n_train = static_cast<size_t>(std::floor(n * ratios[0]));
  size_t n_val = static_cast<size_t>(std::floor(n * ratios[1]));
  if (n_train == 0) n_train = 1;
  if (n_val == 0) n_val = 1;
  while (n_train + n_val >= n) {
    if (n_train > 1) --n_train;
    else --n_val;
  }
  SplitResult r;
  for (size_t i = 0; i < n; ++i) {
    Scenario& sc = scenarios[order[i]];
    if (i < n_train) r.train.push_back(std::move(sc));
    else if (i < n_train + n_val) r.val.push_back(std::move(sc));
    else r.test.push_back(std::move(sc));
  }
  return r;
}

// --- JSONL ------------------------------------------------------------------

using ordered_json = nlohmann::ordered_json;

static ordered_json strategy_to_json(const GraphStrategy& st) {
  return {{"kind", strategy_name(st.kind)}, {"k", st.k},
          {"edge_count", st.edge_count}};
}

static GraphStrategy strategy_from_json(const ordered_json& j) {
  GraphStrategy st;
  st.kind = strategy_from_name(j.at("kind").get<std::string>());
  st.k = j.at("k");
  st.edge_count = j.at("edge_count");
  return st;
}

std::string scenario_to_jsonl(const Scenario& s) {
  std::ostringstream out;
  ordered_json meta;
  meta["version"] = s.meta.version;
  meta["n_nodes"] = s.meta.n_nodes;
  meta["d0"] = s.meta.d0;
  meta["d_task"] = s.meta.d_task;
  meta["seed"] = s.meta.seed;
  meta["strategy"] = strategy_to_json(s.meta.strategy);
  meta["duration_ms"] = s.meta.duration_ms;
  meta["snapshot_interval_ms"] = s.meta.snapshot_interval_ms;
  out << meta.dump() << "\n";

  for (const auto& snap : s.snapshots) {
    ordered_json j;
    j["t"] = snap.t;
    j["nodes"] = ordered_json::array();
    for (const auto& rec : snap.nodes) {
      ordered_json r;
      r["id"] = rec.id;
      r["raw"] = {{"queue_len", rec.raw.queue_len},
                  {"cpu_capacity", rec.raw.cpu_capacity},
                  {"mem_free_frac", rec.raw.mem_free_frac},
                  {"recent_latency_ms", rec.raw.recent_latency_ms},
                  {"active", rec.raw.active}};
      r["enc"] = rec.enc;
      j["nodes"].push_back(std::move(r));
    }
    j["edges"] = ordered_json::array();
    for (auto [a, b] : snap.edges) j["edges"].push_back({a, b});
    j["tasks"] = ordered_json::array();
    for (const auto& tk : snap.tasks)
      j["tasks"].push_back({{"id", tk.id}, {"arrival_t", tk.arrival_t},
                            {"size", tk.size}, {"deadline", tk.deadline},
                            {"origin", tk.origin}, {"feature", tk.feature}});
    if (snap.labels.present) {
      ordered_json lbl;
      lbl["assignments"] = ordered_json::array();
      for (auto [tid, node] : snap.labels.assignments)
        lbl["assignments"].push_back({tid, node});
      lbl["classes"] = snap.labels.classes;
      j["labels"] = std::move(lbl);
    }
    out << j.dump() << "\n";
  }
  return out.str();
}

Scenario scenario_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("scenario file is empty");
  ordered_json meta;
  try {
    meta = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed scenario meta: ") + e.what());
  }
  Scenario s;
  s.meta.version = meta.at("version");
  s.meta.n_nodes = meta.at("n_nodes");
  s.meta.d0 = meta.at("d0");
  s.meta.d_task = meta.at("d_task");
  s.meta.seed = meta.at("seed").get<uint64_t>();
  s.meta.strategy = strategy_from_json(meta.at("strategy"));
  s.meta.duration_ms = meta.at("duration_ms");
  s.meta.snapshot_interval_ms = meta.at("snapshot_interval_ms");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(std::string("malformed snapshot line: ") + e.what());
    }
    Snapshot snap;
    snap.t = j.at("t");
    for (const auto& r : j.at("nodes")) {
      NodeRecord rec;
      rec.id = r.at("id");
      rec.raw.queue_len = r.at("raw").at("queue_len");
      rec.raw.cpu_capacity = r.at("raw").at("cpu_capacity");
      rec.raw.mem_free_frac = r.at("raw").at("mem_free_frac");
      rec.raw.recent_latency_ms = r.at("raw").at("recent_latency_ms");
      rec.raw.active = r.at("raw").at("active");
      rec.enc = r.at("enc").get<std::vector<double>>();
      snap.nodes.push_back(std::move(rec));
    }
    for (const auto& e : j.at("edges"))
      snap.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    for (const auto& t : j.at("tasks")) {
      Task tk;
      tk.id = t.at("id");
      tk.arrival_t = t.at("arrival_t");
      tk.size = t.at("size");
      tk.deadline = t.at("deadline");
      tk.origin = t.at("origin");
      tk.feature = t.at("feature").get<std::vector<double>>();
      snap.tasks.push_back(std::move(tk));
    }
    if (j.contains("labels")) {
      snap.labels.present = true;
      for (const auto& a : j["labels"].at("assignments"))
        snap.labels.assignments.push_back({a.at(0).get<int>(), a.at(1).get<int>()});
      snap.labels.classes = j["labels"].at("classes").get<std::vector<int>>();
    }
    s.snapshots.push_back(std::move(snap));
  }
  return s;
}

void save_scenario(const std::string& path, const Scenario& s) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open scenario for writing: " + path);
  f << scenario_to_jsonl(s);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open scenario: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return scenario_from_jsonl(ss.str());
}

}  // namespace dsched
