#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsched/graph.hpp"
#include "dsched/matrix.hpp"
#include "dsched/util.hpp"

namespace dsched {

struct Dims {
  int d0 = 8;      // input feature width
  int d = 16;      // hidden / final layer width
  int L = 2;       // number of message-passing layers
  int da = 16;     // attention projection width, must equal d for fusion
  int d_task = 4;  // task feature width consumed by the assignment head
};

struct LayerParams {
  Matrix W;       // d_out x d_in, neighbor transform
  Matrix W_self;  // d_out x d_in, self transform
};

struct AttentionParams {
  Matrix Wq, Wk, Wv;  // da x d
};

struct FusionParams {
  double gate_raw = 0.0;
  double alpha() const { return sigmoid(gate_raw); }
};

struct PolicyParams {
  Matrix W_assign;  // 1 x (d + d_task)
  Matrix W_class;   // 3 x d
};

struct ModelParams {
  Dims dims;
  std::vector<LayerParams> layers;  // size L
  AttentionParams attention;
  FusionParams fusion;
  PolicyParams policy;
  uint64_t rng_seed = 0;

  int layer_in_dim(int l) const { return l == 0 ? dims.d0 : dims.d; }
};

/// Fan-scaled uniform init (+-sqrt(6/(fan_in+fan_out))), gate_raw = 0.
ModelParams model_init(const Dims& dims, uint64_t seed);

struct Gradients {
  std::vector<LayerParams> layers;  // same shapes as ModelParams.layers
  AttentionParams attention;
  double gate_raw = 0.0;
  PolicyParams policy;

  static Gradients zeros_like(const ModelParams& p);
  void add_scaled(const Gradients& o, double scale);
  void scale(double s);
  double global_norm() const;
  void clip_global_norm(double max_norm);
};

/// Visits every trainable matrix block in a fixed order shared between
/// ModelParams and Gradients (gate_raw is visited via the scalar callback).
void for_each_block(ModelParams& p,
                    const std::function<void(const std::string&, Matrix&)>& fm,
                    const std::function<void(const std::string&, double&)>& fs);
void for_each_block(Gradients& g,
                    const std::function<void(const std::string&, Matrix&)>& fm,
                    const std::function<void(const std::string&, double&)>& fs);

struct PerceptionState {
  std::vector<Matrix> layer_inputs;  // H^(0) .. H^(L)
  std::vector<Matrix> pre_acts;      // pre-activation of each layer
  Matrix h_final;                    // == layer_inputs.back()
  Matrix a;                          // global attention representation
  Matrix attn_weights;               // n x n softmax rows
  Matrix z;                          // alpha*h_final + (1-alpha)*a
  double alpha = 0.5;
};

/// State of sender j as seen by receiver i (lets the simulator substitute
/// stale copies under the bandwidth model).
using NeighborStateFn =
    std::function<std::span<const double>(int receiver, int sender)>;

/// One message-passing layer. Aggregation is
///   m_i = sum_{j in N(i)} W x_{j->i} / sqrt(deg(i) deg(j))
/// followed by ReLU(m_i + W_self h_i). Per-component contributions are
/// summed in value-sorted order, so the result is invariant under node
/// relabeling.
std::pair<Matrix, Matrix> gcn_layer_forward_mixed(const SystemGraph& g,
                                                  const Matrix& H_self,
                                                  const LayerParams& p,
                                                  const NeighborStateFn& nbr);

std::pair<Matrix, Matrix> gcn_layer_forward(const SystemGraph& g,
                                            const Matrix& H,
                                            const LayerParams& p);

/// Single-head scaled dot-product attention over all nodes (topology
/// ignored). Optionally returns the softmax weight matrix.
Matrix global_attention(const Matrix& H_final, const AttentionParams& p,
                        Matrix* weights_out = nullptr);

Matrix fuse(const Matrix& h_final, const Matrix& a, const FusionParams& p);

PerceptionState forward(const SystemGraph& g, const ModelParams& params);

/// Exact gradients of a scalar loss w.r.t. every non-policy parameter,
/// given dL/dz. Policy-head gradients are produced by the trainer, which
/// also owns dL/dz.
Gradients backward(const PerceptionState& state, const SystemGraph& g,
                   const ModelParams& params, const Matrix& dL_dz);

struct GradCheckReport {
  std::vector<std::pair<std::string, double>> block_err;  // max rel err per block
  double max_rel_err = 0.0;
  bool ok(double tol) const { return max_rel_err < tol; }
};

/// Central finite differences over every parameter entry vs. the supplied
/// analytic gradients. Relative error denominator is
/// max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(
    const ModelParams& params,
    const std::function<double(const ModelParams&)>& loss_fn,
    const Gradients& analytic, double step);

// --- checkpoint file format -------------------------------------------------

struct Checkpoint {
  ModelParams params;
  std::vector<double> norm_mean;  // feature normalization stats, may be empty
  std::vector<double> norm_std;
};

std::string checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsched
