#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsched/experiments.hpp"

using namespace dsched;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  try {
    return ordered_json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
}

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

GraphStrategy strategy_from_cfg(const ordered_json& j) {
  GraphStrategy st;
  std::string kind = strategy_name(st.kind);
  maybe(j, "kind", kind);
  st.kind = strategy_from_name(kind);
  maybe(j, "k", st.k);
  maybe(j, "edge_count", st.edge_count);
  return st;
}

GenConfig gen_from_cfg(const ordered_json& j, GenConfig base) {
  maybe(j, "n_nodes", base.n_nodes);
  maybe(j, "duration_ms", base.duration_ms);
  maybe(j, "snapshot_interval_ms", base.snapshot_interval_ms);
  maybe(j, "arrival_rate", base.arrival_rate);
  maybe(j, "mean_task_size", base.mean_task_size);
  maybe(j, "slack_factor", base.slack_factor);
  maybe(j, "heterogeneity", base.heterogeneity);
  maybe(j, "churn_rate", base.churn_rate);
  maybe(j, "obs_noise", base.obs_noise);
  maybe(j, "labels", base.labels);
  if (j.contains("strategy")) base.strategy = strategy_from_cfg(j["strategy"]);
  return base;
}

BenchmarkConfig benchmark_from_cfg(const ordered_json& j) {
  BenchmarkConfig cfg = default_benchmark();
  if (j.contains("gen")) cfg.gen = gen_from_cfg(j["gen"], cfg.gen);
  maybe(j, "scenarios_per_seed", cfg.scenarios_per_seed);
  if (j.contains("split_ratios")) {
    auto v = j["split_ratios"].get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("split_ratios must have 3 entries");
    cfg.split_ratios = {v[0], v[1], v[2]};
  }
  if (j.contains("dims")) {
    const auto& d = j["dims"];
    maybe(d, "d0", cfg.dims.d0);
    maybe(d, "d", cfg.dims.d);
    maybe(d, "L", cfg.dims.L);
    maybe(d, "d_a", cfg.dims.da);
    maybe(d, "d_task", cfg.dims.d_task);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    maybe(t, "lr", cfg.train_cfg.lr);
    maybe(t, "momentum", cfg.train_cfg.momentum);
    maybe(t, "grad_clip_norm", cfg.train_cfg.grad_clip_norm);
    maybe(t, "batch_snapshots", cfg.train_cfg.batch_snapshots);
    maybe(t, "max_steps", cfg.train_cfg.max_steps);
    maybe(t, "eval_every", cfg.train_cfg.eval_every);
    maybe(t, "lambda_class", cfg.train_cfg.lambda_class);
  }
  if (j.contains("link")) {
    maybe(j["link"], "bandwidth_mbps", cfg.link.bandwidth_mbps);
    maybe(j["link"], "base_latency_ms", cfg.link.base_latency_ms);
  }
  if (j.contains("sim")) {
    maybe(j["sim"], "round_interval_ms", cfg.sim.round_interval_ms);
    maybe(j["sim"], "round_budget_ms", cfg.sim.round_budget_ms);
  }
  return cfg;
}

std::vector<uint64_t> seeds_from_cfg(const ordered_json& j, uint64_t fallback) {
  if (j.contains("seeds")) return j["seeds"].get<std::vector<uint64_t>>();
  // 5 default seeds derived from the base seed
  std::vector<uint64_t> seeds;
  for (uint64_t i = 0; i < 5; ++i) seeds.push_back(fallback + i);
  return seeds;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open output file: " + path);
  f << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNN collaborative-perception scheduling simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path = "out.csv", checkpoint_path;
  uint64_t seed = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "base RNG seed");
    cmd->add_option("--out", out_path, "output path");
    cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint path");
  };

  CLI::App* c_gen = app.add_subcommand("generate", "generate a scenario file (JSONL)");
  CLI::App* c_train = app.add_subcommand("train", "train a model on the benchmark");
  CLI::App* c_cmp = app.add_subcommand("compare-schedulers", "policy comparison table");
  CLI::App* c_sweep = app.add_subcommand("sweep-bandwidth", "transmission efficiency sweep");
  CLI::App* c_strat = app.add_subcommand("compare-graph-strategies",
                                         "graph construction comparison");
  CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
  double grad_tol = 1e-4;
  c_grad->add_option("--tol", grad_tol, "max allowed relative error");
  for (CLI::App* c : {c_gen, c_train, c_cmp, c_sweep, c_strat, c_grad})
    add_common(c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ordered_json cfg_json = ordered_json::object();
    if (!config_path.empty()) cfg_json = load_json(config_path);

    if (c_gen->parsed()) {
      GenConfig gc = gen_from_cfg(cfg_json.contains("gen") ? cfg_json["gen"] : cfg_json,
                                  default_benchmark().gen);
      Scenario sc = generate(gc, seed);
      write_file(out_path, scenario_to_jsonl(sc));
      std::cout << "wrote " << out_path << " (" << sc.snapshots.size()
                << " snapshots)\n";
    } else if (c_train->parsed()) {
      BenchmarkConfig cfg = benchmark_from_cfg(cfg_json);
      Prepared p = prepare(cfg, seed);
      if (checkpoint_path.empty()) checkpoint_path = "model.ckpt.json";
      Checkpoint ck;
      ck.params = p.trained.params;
      ck.norm_mean.assign(p.stats.mean.begin(), p.stats.mean.end());
      ck.norm_std.assign(p.stats.stddev.begin(), p.stats.stddev.end());
      save_checkpoint(checkpoint_path, ck);
      write_file(out_path, curve_to_csv(p.trained.curve));
      std::cout << "final val assignment accuracy "
                << p.trained.curve.back().val_assignment_accuracy
                << ", perception accuracy "
                << p.trained.curve.back().val_perception_accuracy << "\n";
    } else if (c_cmp->parsed()) {
      BenchmarkConfig cfg = benchmark_from_cfg(cfg_json);
      std::vector<PolicyKind> policies = {
          PolicyKind::Gnn, PolicyKind::RoundRobin, PolicyKind::Random,
          PolicyKind::LeastLoaded, PolicyKind::GreedyLatency};
      if (cfg_json.contains("policies")) {
        policies.clear();
        for (const auto& p : cfg_json["policies"])
          policies.push_back(policy_from_name(p.get<std::string>()));
      }
      CompareResult r =
          run_compare_schedulers(cfg, policies, seeds_from_cfg(cfg_json, seed));
      write_file(out_path, r.csv);
      ordered_json js;
      for (const auto& [name, m] : r.means)
        js[name] = ordered_json::parse(metrics_to_json(m));
      write_file(out_path + ".json", js.dump(2) + "\n");
      std::cout << r.csv;
    } else if (c_sweep->parsed()) {
      BenchmarkConfig cfg = benchmark_from_cfg(cfg_json);
      if (!cfg_json.contains("sim")) {
        // defaults that expose the bandwidth knee of the shipped benchmark
        cfg.sim.round_budget_ms = 0.03;
      }
      std::vector<double> bws = {50.0, 20.0, 10.0};
      if (cfg_json.contains("bandwidths_mbps"))
        bws = cfg_json["bandwidths_mbps"].get<std::vector<double>>();
      SweepResult r = run_sweep_bandwidth(cfg, bws, seeds_from_cfg(cfg_json, seed));
      write_file(out_path, r.csv);
      std::cout << r.csv;
    } else if (c_strat->parsed()) {
      BenchmarkConfig cfg = benchmark_from_cfg(cfg_json);
      std::vector<GraphStrategy> strategies;
      if (cfg_json.contains("strategies")) {
        for (const auto& s : cfg_json["strategies"])
          strategies.push_back(strategy_from_cfg(s));
      } else {
        for (auto kind : {GraphStrategy::Kind::Random,
                          GraphStrategy::Kind::StaticKnn,
                          GraphStrategy::Kind::DynamicAdaptive}) {
          GraphStrategy st = cfg.gen.strategy;
          st.kind = kind;
          strategies.push_back(st);
        }
      }
      StrategyResult r = run_compare_graph_strategies(
          cfg, strategies, seeds_from_cfg(cfg_json, seed));
      write_file(out_path, r.csv);
      std::cout << r.csv;
    } else if (c_grad->parsed()) {
      Dims dims;
      dims.d0 = 3;
      dims.d = 4;
      dims.da = 4;
      dims.L = 2;
      dims.d_task = 2;
      ModelParams params = model_init(dims, seed);
      Rng rng(derive_seed(seed, 1));
      int n = 5;
      Matrix feats(n, dims.d0);
      for (double& v : feats.data()) v = rng.normal();
      EdgeList edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}};
      TrainItem item{SystemGraph::build(n, edges, feats),
                     {},
                     std::vector<int>(static_cast<size_t>(n))};
      for (int t = 0; t < 3; ++t) {
        Task task;
        task.id = t;
        task.feature = {rng.normal(), rng.normal()};
        item.tasks.push_back({task, rng.uniform_int(0, n - 1)});
      }
      for (auto& c : item.classes) c = rng.uniform_int(0, 2);
      std::vector<TrainItem> batch = {item};
      auto [loss, grads] = loss_and_grad(params, batch, 0.5);
      auto loss_fn = [&](const ModelParams& p) {
        return loss_and_grad(p, batch, 0.5).first;
      };
      GradCheckReport rep = finite_diff_check(params, loss_fn, grads, 1e-4);
      for (const auto& [name, err] : rep.block_err)
        std::printf("%-22s max rel err %.3e\n", name.c_str(), err);
      std::printf("overall max rel err %.3e (tol %.1e): %s\n", rep.max_rel_err,
                  grad_tol, rep.ok(grad_tol) ? "ok" : "FAIL");
      if (!rep.ok(grad_tol)) return 4;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
