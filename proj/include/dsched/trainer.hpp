#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dsched/dataset.hpp"
#include "dsched/gnn.hpp"
#include "dsched/scheduler.hpp"

namespace dsched {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double grad_clip_norm = 5.0;
  int batch_snapshots = 8;
  int max_steps = 200;
  int eval_every = 10;
  double lambda_class = 0.5;  // weight of the load-class loss term
  uint64_t seed = 0;
};

/// One labeled snapshot, ready for the forward pass.
struct TrainItem {
  SystemGraph graph;                         // encoded features + active mask
  std::vector<std::pair<Task, int>> tasks;   // task, oracle node
  std::vector<int> classes;                  // per node ground-truth class
};

std::vector<TrainItem> build_dataset(const std::vector<Scenario>& scenarios);

/// Imitation loss: mean cross-entropy of the assignment head against the
/// oracle labels plus lambda times the mean load-class cross-entropy.
/// Gradients cover the policy heads and, through dL/dz, every model block.
std::pair<double, Gradients> loss_and_grad(const ModelParams& params,
                                           std::span<const TrainItem> batch,
                                           double lambda_class);

struct CurvePoint {
  int step = 0;
  double train_loss = 0.0;
  double val_assignment_accuracy = 0.0;
  double val_perception_accuracy = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

struct EvalResult {
  double assignment_accuracy = 0.0;
  double perception_accuracy = 0.0;
};

EvalResult evaluate(const ModelParams& params,
                    std::span<const TrainItem> items);

struct TrainResult {
  ModelParams params;
  LearningCurve curve;
};

/// SGD with momentum, global-norm clipping, seeded batch shuffling.
TrainResult train(const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& val_items,
                  const ModelParams& init, const TrainConfig& cfg);

/// First eval step whose 10-point moving average of val perception
/// accuracy reaches 95% of the plateau (the maximum moving average).
/// nullopt when the curve is shorter than the window.
std::optional<int> convergence_steps(const LearningCurve& curve);

std::string curve_to_csv(const LearningCurve& curve);

}  // namespace dsched
