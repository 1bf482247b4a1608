#include "dsched/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dsched {

std::vector<TrainItem> build_dataset(const std::vector<Scenario>& scenarios) {
  std::vector<TrainItem> items;
  for (const auto& sc : scenarios) {
    for (const auto& snap : sc.snapshots) {
      if (!snap.labels.present) continue;
      int n = sc.meta.n_nodes;
      Matrix feats(n, sc.meta.d0);
      std::vector<char> active(static_cast<size_t>(n), 0);
      for (const auto& rec : snap.nodes) {
        if (static_cast<int>(rec.enc.size()) != sc.meta.d0)
          throw DataError("build_dataset: scenario not preprocessed");
        for (int c = 0; c < sc.meta.d0; ++c) feats(rec.id, c) = rec.enc[static_cast<size_t>(c)];
        active[static_cast<size_t>(rec.id)] = rec.raw.active ? 1 : 0;
      }
      TrainItem item{SystemGraph::build(n, snap.edges, std::move(feats), active),
                     {},
                     snap.labels.classes};
      for (const auto& tk : snap.tasks) {
        for (auto [tid, node] : snap.labels.assignments)
          if (tid == tk.id && active[static_cast<size_t>(node)]) {
            item.tasks.push_back({tk, node});
            break;
          }
      }
      items.push_back(std::move(item));
    }
  }
  return items;
}

std::pair<double, Gradients> loss_and_grad(const ModelParams& params,
                                           std::span<const TrainItem> batch,
                                           double lambda_class) {
  long n_tasks = 0, n_class = 0;
  for (const auto& item : batch) {
    n_tasks += static_cast<long>(item.tasks.size());
    for (size_t i = 0; i < item.graph.active().size(); ++i)
      if (item.graph.active()[i]) ++n_class;
  }
  if (n_tasks == 0 && n_class == 0)
    throw DataError("loss_and_grad: batch carries no labels");
  double wt_task = n_tasks > 0 ? 1.0 / static_cast<double>(n_tasks) : 0.0;
  double wt_class =
      n_class > 0 ? lambda_class / static_cast<double>(n_class) : 0.0;

  Gradients total = Gradients::zeros_like(params);
  double loss = 0.0;
  int d = params.dims.d;

  for (const auto& item : batch) {
    PerceptionState st = forward(item.graph, params);
    int n = item.graph.n();
    Matrix dZ(n, d);

    for (const auto& [task, label] : item.tasks) {
      std::vector<double> probs =
          score_assignment(st.z, task, params.policy, item.graph.active());
      double p = std::max(probs[static_cast<size_t>(label)], 1e-300);
      loss += -std::log(p) * wt_task;
      for (int i = 0; i < n; ++i) {
        if (!item.graph.active()[static_cast<size_t>(i)]) continue;
        double dlogit =
            (probs[static_cast<size_t>(i)] - (i == label ? 1.0 : 0.0)) * wt_task;
        for (int c = 0; c < d; ++c) {
          total.policy.W_assign(0, c) += dlogit * st.z(i, c);
          dZ(i, c) += dlogit * params.policy.W_assign(0, c);
        }
        for (size_t c = 0; c < task.feature.size(); ++c)
          total.policy.W_assign(0, d + static_cast<int>(c)) +=
              dlogit * task.feature[c];
      }
    }

    if (wt_class > 0.0) {
      for (int i = 0; i < n; ++i) {
        if (!item.graph.active()[static_cast<size_t>(i)]) continue;
        int truth = item.classes[static_cast<size_t>(i)];
        LoadClassification cl = classify_load(st.z.row(i), params.policy);
        double p = std::max(cl.probs[static_cast<size_t>(truth)], 1e-300);
        loss += -std::log(p) * wt_class;
        for (int c = 0; c < 3; ++c) {
          double dlogit =
              (cl.probs[static_cast<size_t>(c)] - (c == truth ? 1.0 : 0.0)) *
              wt_class;
          for (int f = 0; f < d; ++f) {
            total.policy.W_class(c, f) += dlogit * st.z(i, f);
            dZ(i, f) += dlogit * params.policy.W_class(c, f);
          }
        }
      }
    }

    Gradients g = backward(st, item.graph, params, dZ);
    // backward leaves policy blocks zero; accumulated above
    total.add_scaled(g, 1.0);
  }
  return {loss, std::move(total)};
}

EvalResult evaluate(const ModelParams& params,
                    std::span<const TrainItem> items) {
  long a_ok = 0, a_total = 0, c_ok = 0, c_total = 0;
  for (const auto& item : items) {
    PerceptionState st = forward(item.graph, params);
    for (const auto& [task, label] : item.tasks) {
      std::vector<double> probs =
          score_assignment(st.z, task, params.policy, item.graph.active());
      if (select_node(probs) == label) ++a_ok;
      ++a_total;
    }
    for (int i = 0; i < item.graph.n(); ++i) {
      if (!item.graph.active()[static_cast<size_t>(i)]) continue;
      LoadClassification cl = classify_load(st.z.row(i), params.policy);
      if (static_cast<int>(cl.cls) == item.classes[static_cast<size_t>(i)]) ++c_ok;
      ++c_total;
    }
  }
  EvalResult r;
  r.assignment_accuracy =
      a_total > 0 ? static_cast<double>(a_ok) / static_cast<double>(a_total) : 0.0;
  r.perception_accuracy =
      c_total > 0 ? static_cast<double>(c_ok) / static_cast<double>(c_total) : 0.0;
  return r;
}

static void params_add_scaled(ModelParams& p, const Gradients& g, double s) {
  for (size_t l = 0; l < p.layers.size(); ++l) {
    add_inplace(p.layers[l].W, g.layers[l].W, s);
    add_inplace(p.layers[l].W_self, g.layers[l].W_self, s);
  }
  add_inplace(p.attention.Wq, g.attention.Wq, s);
  add_inplace(p.attention.Wk, g.attention.Wk, s);
  add_inplace(p.attention.Wv, g.attention.Wv, s);
  p.fusion.gate_raw += s * g.gate_raw;
  add_inplace(p.policy.W_assign, g.policy.W_assign, s);
  add_inplace(p.policy.W_class, g.policy.W_class, s);
}

TrainResult train(const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& val_items,
                  const ModelParams& init, const TrainConfig& cfg) {
  if (train_items.empty() || val_items.empty())
    throw DataError("train: empty split");
  if (cfg.lr < 0 || cfg.momentum < 0 || cfg.momentum >= 1 ||
      cfg.grad_clip_norm <= 0 || cfg.batch_snapshots < 1 || cfg.max_steps < 1 ||
      cfg.eval_every < 1)
    throw ConfigError("train: bad config");

  TrainResult res;
  res.params = init;
  Gradients velocity = Gradients::zeros_like(init);
  Rng rng(cfg.seed);

  std::vector<size_t> order(train_items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // trigger shuffle on first batch

  std::vector<TrainItem> batch;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.batch_snapshots; ++b) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(train_items[order[cursor++]]);
    }
    auto [loss, grads] = loss_and_grad(res.params, batch, cfg.lambda_class);
    if (!std::isfinite(loss))
      throw NumericError("training diverged at step " + std::to_string(step));
    grads.clip_global_norm(cfg.grad_clip_norm);
    velocity.scale(cfg.momentum);
    velocity.add_scaled(grads, 1.0);
    params_add_scaled(res.params, velocity, -cfg.lr);

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      EvalResult ev = evaluate(res.params, val_items);
      res.curve.push_back({step, loss, ev.assignment_accuracy,
                           ev.perception_accuracy});
    }
  }
  return res;
}

std::optional<int> convergence_steps(const LearningCurve& curve) {
  constexpr size_t kWindow = 10;
  if (curve.size() < kWindow) return std::nullopt;
  std::vector<double> ma;
  for (size_t i = kWindow - 1; i < curve.size(); ++i) {
    double s = 0.0;
    for (size_t j = i + 1 - kWindow; j <= i; ++j)
      s += curve[j].val_perception_accuracy;
    ma.push_back(s / static_cast<double>(kWindow));
  }
  double plateau = *std::max_element(ma.begin(), ma.end());
  for (size_t i = 0; i < ma.size(); ++i)
    if (ma[i] >= 0.95 * plateau)
      return curve[i + kWindow - 1].step;
  return std::nullopt;
}

std::string curve_to_csv(const LearningCurve& curve) {
  std::ostringstream out;
  out << "step,train_loss,val_assignment_accuracy,val_perception_accuracy\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", p.step, p.train_loss,
                  p.val_assignment_accuracy, p.val_perception_accuracy);
    out << buf;
  }
  return out.str();
}

}  // namespace dsched
