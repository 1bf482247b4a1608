#include "dsched/gnn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dsched {

ModelParams model_init(const Dims& dims, uint64_t seed) {
  if (dims.L < 1 || dims.d0 < 1 || dims.d < 1 || dims.d_task < 0)
    throw ConfigError("bad model dims");
  if (dims.da != dims.d)
    throw ConfigError("fusion requires attention width == hidden width");
  ModelParams p;
  p.dims = dims;
  p.rng_seed = seed;
  p.layers.resize(static_cast<size_t>(dims.L));
  for (int l = 0; l < dims.L; ++l) {
    int din = p.layer_in_dim(l);
    p.layers[static_cast<size_t>(l)].W = Matrix(dims.d, din);
    p.layers[static_cast<size_t>(l)].W_self = Matrix(dims.d, din);
  }
  p.attention.Wq = Matrix(dims.da, dims.d);
  p.attention.Wk = Matrix(dims.da, dims.d);
  p.attention.Wv = Matrix(dims.da, dims.d);
  p.policy.W_assign = Matrix(1, dims.d + dims.d_task);
  p.policy.W_class = Matrix(3, dims.d);
  p.fusion.gate_raw = 0.0;

  Rng rng(seed);
  for_each_block(
      p,
      [&](const std::string&, Matrix& m) {
        double lim = std::sqrt(6.0 / (m.rows() + m.cols()));
        for (double& v : m.data()) v = rng.uniform(-lim, lim);
      },
      [](const std::string&, double&) {});
  return p;
}

Gradients Gradients::zeros_like(const ModelParams& p) {
  Gradients g;
  g.layers.resize(p.layers.size());
  for (size_t l = 0; l < p.layers.size(); ++l) {
    g.layers[l].W = Matrix(p.layers[l].W.rows(), p.layers[l].W.cols());
    g.layers[l].W_self =
        Matrix(p.layers[l].W_self.rows(), p.layers[l].W_self.cols());
  }
  g.attention.Wq = Matrix(p.attention.Wq.rows(), p.attention.Wq.cols());
  g.attention.Wk = Matrix(p.attention.Wk.rows(), p.attention.Wk.cols());
  g.attention.Wv = Matrix(p.attention.Wv.rows(), p.attention.Wv.cols());
  g.gate_raw = 0.0;
  g.policy.W_assign = Matrix(p.policy.W_assign.rows(), p.policy.W_assign.cols());
  g.policy.W_class = Matrix(p.policy.W_class.rows(), p.policy.W_class.cols());
  return g;
}

template <typename PG, typename FM, typename FS>
static void visit_blocks(PG& p, FM&& fm, FS&& fs) {
  for (size_t l = 0; l < p.layers.size(); ++l) {
    fm("layer" + std::to_string(l) + ".W", p.layers[l].W);
    fm("layer" + std::to_string(l) + ".W_self", p.layers[l].W_self);
  }
  fm("attention.Wq", p.attention.Wq);
  fm("attention.Wk", p.attention.Wk);
  fm("attention.Wv", p.attention.Wv);
  visit_scalar(p, fs);
  fm("policy.W_assign", p.policy.W_assign);
  fm("policy.W_class", p.policy.W_class);
}

static void visit_scalar(ModelParams& p,
                         const std::function<void(const std::string&, double&)>& fs) {
  fs("fusion.gate_raw", p.fusion.gate_raw);
}
static void visit_scalar(Gradients& g,
                         const std::function<void(const std::string&, double&)>& fs) {
  fs("fusion.gate_raw", g.gate_raw);
}

void for_each_block(ModelParams& p,
                    const std::function<void(const std::string&, Matrix&)>& fm,
                    const std::function<void(const std::string&, double&)>& fs) {
  visit_blocks(p, fm, fs);
}
void for_each_block(Gradients& g,
                    const std::function<void(const std::string&, Matrix&)>& fm,
                    const std::function<void(const std::string&, double&)>& fs) {
  visit_blocks(g, fm, fs);
}

void Gradients::add_scaled(const Gradients& o, double scale) {
  for (size_t l = 0; l < layers.size(); ++l) {
    add_inplace(layers[l].W, o.layers[l].W, scale);
    add_inplace(layers[l].W_self, o.layers[l].W_self, scale);
  }
  add_inplace(attention.Wq, o.attention.Wq, scale);
  add_inplace(attention.Wk, o.attention.Wk, scale);
  add_inplace(attention.Wv, o.attention.Wv, scale);
  gate_raw += scale * o.gate_raw;
  add_inplace(policy.W_assign, o.policy.W_assign, scale);
  add_inplace(policy.W_class, o.policy.W_class, scale);
}

void Gradients::scale(double s) {
  for_each_block(
      *this,
      [&](const std::string&, Matrix& m) {
        for (double& v : m.data()) v *= s;
      },
      [&](const std::string&, double& v) { v *= s; });
}

double Gradients::global_norm() const {
  double s = 0.0;
  for_each_block(
      const_cast<Gradients&>(*this),
      [&](const std::string&, Matrix& m) {
        for (double v : m.data()) s += v * v;
      },
      [&](const std::string&, double& v) { s += v * v; });
  return std::sqrt(s);
}

void Gradients::clip_global_norm(double max_norm) {
  double n = global_norm();
  if (n > max_norm && n > 0.0) scale(max_norm / n);
}

std::pair<Matrix, Matrix> gcn_layer_forward_mixed(const SystemGraph& g,
                                                  const Matrix& H_self,
                                                  const LayerParams& p,
                                                  const NeighborStateFn& nbr) {
  int n = g.n();
  int d_in = p.W.cols();
  int d_out = p.W.rows();
  if (H_self.rows() != n || H_self.cols() != d_in)
    throw std::invalid_argument("gcn_layer_forward: shape mismatch");
  if (!p.W.same_shape(p.W_self))
    throw std::invalid_argument("gcn_layer_forward: W vs W_self shape");

  Matrix pre(n, d_out);
  Matrix H_next(n, d_out);
  std::vector<double> buf;
  for (int i = 0; i < n; ++i) {
    std::vector<double> self_term = matvec(p.W_self, H_self.row(i));
    const auto& nbrs = g.neighbors(i);
    std::vector<std::vector<double>> msgs;
    msgs.reserve(nbrs.size());
    for (int j : nbrs) {
      std::span<const double> x = nbr(i, j);
      if (static_cast<int>(x.size()) != d_in)
        throw std::invalid_argument("neighbor state width mismatch");
      std::vector<double> t = matvec(p.W, x);
      double c = g.norm_coefficient(i, j);
      for (double& v : t) v *= c;
      msgs.push_back(std::move(t));
    }
    for (int k = 0; k < d_out; ++k) {
      buf.clear();
      for (const auto& t : msgs) buf.push_back(t[static_cast<size_t>(k)]);
      double m = sorted_sum(buf);
      double v = m + self_term[static_cast<size_t>(k)];
      pre(i, k) = v;
      H_next(i, k) = v > 0.0 ? v : 0.0;
    }
  }
  if (!pre.all_finite()) throw NumericError("gcn layer produced non-finite values");
  return {std::move(H_next), std::move(pre)};
}

std::pair<Matrix, Matrix> gcn_layer_forward(const SystemGraph& g,
                                            const Matrix& H,
                                            const LayerParams& p) {
  return gcn_layer_forward_mixed(
      g, H, p, [&H](int, int sender) { return H.row(sender); });
}

Matrix global_attention(const Matrix& H_final, const AttentionParams& p,
                        Matrix* weights_out) {
  int n = H_final.rows();
  if (n < 1) throw std::invalid_argument("global_attention: empty input");
  int da = p.Wq.rows();
  Matrix Q = matmul_nt(H_final, p.Wq);
  Matrix K = matmul_nt(H_final, p.Wk);
  Matrix V = matmul_nt(H_final, p.Wv);
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(da));

  Matrix weights(n, n);
  Matrix A(n, da);
  std::vector<double> logits(static_cast<size_t>(n));
  std::vector<double> buf;
  for (int i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int c = 0; c < da; ++c) s += Q(i, c) * K(j, c);
      logits[static_cast<size_t>(j)] = s * inv_scale;
      mx = std::max(mx, logits[static_cast<size_t>(j)]);
    }
    buf.clear();
    for (int j = 0; j < n; ++j) {
      weights(i, j) = std::exp(logits[static_cast<size_t>(j)] - mx);
      buf.push_back(weights(i, j));
    }
    double denom = sorted_sum(buf);
    for (int j = 0; j < n; ++j) weights(i, j) /= denom;
    for (int c = 0; c < da; ++c) {
      buf.clear();
      for (int j = 0; j < n; ++j) buf.push_back(weights(i, j) * V(j, c));
      A(i, c) = sorted_sum(buf);
    }
  }
  if (!A.all_finite()) throw NumericError("attention produced non-finite values");
  if (weights_out) *weights_out = std::move(weights);
  return A;
}

Matrix fuse(const Matrix& h_final, const Matrix& a, const FusionParams& p) {
  if (!h_final.same_shape(a)) throw std::invalid_argument("fuse: shape mismatch");
  double alpha = p.alpha();
  Matrix z(h_final.rows(), h_final.cols());
  for (size_t i = 0; i < z.data().size(); ++i)
    z.data()[i] = alpha * h_final.data()[i] + (1.0 - alpha) * a.data()[i];
  return z;
}

PerceptionState forward(const SystemGraph& g, const ModelParams& params) {
  if (g.features().cols() != params.dims.d0)
    throw std::invalid_argument("forward: feature width != d0");
  PerceptionState s;
  s.layer_inputs.push_back(g.features());
  for (int l = 0; l < params.dims.L; ++l) {
    auto [h, pre] = gcn_layer_forward(g, s.layer_inputs.back(),
                                      params.layers[static_cast<size_t>(l)]);
    s.pre_acts.push_back(std::move(pre));
    s.layer_inputs.push_back(std::move(h));
  }
  s.h_final = s.layer_inputs.back();
  s.a = global_attention(s.h_final, params.attention, &s.attn_weights);
  s.alpha = params.fusion.alpha();
  s.z = fuse(s.h_final, s.a, params.fusion);
  return s;
}

// Y_i = sum_{j in N(i)} X_j / sqrt(deg(i) deg(j)), ascending-id order.
static Matrix apply_norm_adjacency(const SystemGraph& g, const Matrix& X) {
  Matrix Y(X.rows(), X.cols());
  for (int i = 0; i < g.n(); ++i)
    for (int j : g.neighbors(i)) {
      double c = g.norm_coefficient(i, j);
      for (int k = 0; k < X.cols(); ++k) Y(i, k) += c * X(j, k);
    }
  return Y;
}

Gradients backward(const PerceptionState& state, const SystemGraph& g,
                   const ModelParams& params, const Matrix& dL_dz) {
  if (state.layer_inputs.empty() || state.pre_acts.empty())
    throw std::logic_error("backward: state missing forward cache");
  if (!dL_dz.same_shape(state.z))
    throw std::invalid_argument("backward: dL_dz shape mismatch");

  Gradients grads = Gradients::zeros_like(params);
  double alpha = state.alpha;
  const Matrix& Hf = state.h_final;

  // fusion gate
  double dalpha = 0.0;
  for (size_t i = 0; i < dL_dz.data().size(); ++i)
    dalpha += dL_dz.data()[i] * (Hf.data()[i] - state.a.data()[i]);
  grads.gate_raw = dalpha * alpha * (1.0 - alpha);

  Matrix dHf(Hf.rows(), Hf.cols());
  Matrix dA(Hf.rows(), Hf.cols());
  for (size_t i = 0; i < dL_dz.data().size(); ++i) {
    dHf.data()[i] = alpha * dL_dz.data()[i];
    dA.data()[i] = (1.0 - alpha) * dL_dz.data()[i];
  }

  // attention
  {
    const Matrix& Wt = state.attn_weights;
    int n = Hf.rows();
    int da = params.attention.Wq.rows();
    Matrix Q = matmul_nt(Hf, params.attention.Wq);
    Matrix K = matmul_nt(Hf, params.attention.Wk);
    Matrix V = matmul_nt(Hf, params.attention.Wv);

    Matrix dV = matmul_tn(Wt, dA);
    Matrix dWt = matmul_nt(dA, V);
    Matrix dS(n, n);
    for (int i = 0; i < n; ++i) {
      double r = 0.0;
      for (int k = 0; k < n; ++k) r += Wt(i, k) * dWt(i, k);
      for (int j = 0; j < n; ++j) dS(i, j) = Wt(i, j) * (dWt(i, j) - r);
    }
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(da));
    Matrix dQ = matmul(dS, K);
    Matrix dK = matmul_tn(dS, Q);
    for (double& v : dQ.data()) v *= inv_scale;
    for (double& v : dK.data()) v *= inv_scale;

    grads.attention.Wq = matmul_tn(dQ, Hf);
    grads.attention.Wk = matmul_tn(dK, Hf);
    grads.attention.Wv = matmul_tn(dV, Hf);

    add_inplace(dHf, matmul(dQ, params.attention.Wq));
    add_inplace(dHf, matmul(dK, params.attention.Wk));
    add_inplace(dHf, matmul(dV, params.attention.Wv));
  }

  // message-passing layers, last to first
  Matrix dH = std::move(dHf);
  for (int l = params.dims.L - 1; l >= 0; --l) {
    const Matrix& pre = state.pre_acts[static_cast<size_t>(l)];
    const Matrix& H = state.layer_inputs[static_cast<size_t>(l)];
    const LayerParams& lp = params.layers[static_cast<size_t>(l)];

    Matrix G(pre.rows(), pre.cols());
    for (size_t i = 0; i < G.data().size(); ++i)
      G.data()[i] = pre.data()[i] > 0.0 ? dH.data()[i] : 0.0;

    Matrix AG = apply_norm_adjacency(g, G);
    grads.layers[static_cast<size_t>(l)].W = matmul_tn(AG, H);
    grads.layers[static_cast<size_t>(l)].W_self = matmul_tn(G, H);

    Matrix dH_prev = matmul(AG, lp.W);
    add_inplace(dH_prev, matmul(G, lp.W_self));
    dH = std::move(dH_prev);
  }
  return grads;
}

GradCheckReport finite_diff_check(
    const ModelParams& params,
    const std::function<double(const ModelParams&)>& loss_fn,
    const Gradients& analytic, double step) {
  GradCheckReport rep;
  ModelParams work = params;

  // collect matching block views in visiting order
  std::vector<std::pair<std::string, Matrix*>> pblocks;
  std::vector<double*> pscalars;
  for_each_block(
      work,
      [&](const std::string& name, Matrix& m) { pblocks.push_back({name, &m}); },
      [&](const std::string&, double& v) { pscalars.push_back(&v); });
  std::vector<const Matrix*> gblocks;
  std::vector<const double*> gscalars;
  for_each_block(
      const_cast<Gradients&>(analytic),
      [&](const std::string&, Matrix& m) { gblocks.push_back(&m); },
      [&](const std::string&, double& v) { gscalars.push_back(&v); });

  auto rel_err = [](double a, double b) {
    // the denominator floor keeps central-difference rounding noise on
    // exactly-zero gradient entries from registering as disagreement
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-4});
    return std::fabs(a - b) / denom;
  };

  for (size_t b = 0; b < pblocks.size(); ++b) {
    Matrix& m = *pblocks[b].second;
    const Matrix& gm = *gblocks[b];
    double worst = 0.0;
    for (size_t e = 0; e < m.data().size(); ++e) {
      double saved = m.data()[e];
      m.data()[e] = saved + step;
      double fp = loss_fn(work);
      m.data()[e] = saved - step;
      double fmv = loss_fn(work);
      m.data()[e] = saved;
      double numeric = (fp - fmv) / (2.0 * step);
      worst = std::max(worst, rel_err(gm.data()[e], numeric));
    }
    rep.block_err.push_back({pblocks[b].first, worst});
    rep.max_rel_err = std::max(rep.max_rel_err, worst);
  }
  for (size_t s = 0; s < pscalars.size(); ++s) {
    double saved = *pscalars[s];
    *pscalars[s] = saved + step;
    double fp = loss_fn(work);
    *pscalars[s] = saved - step;
    double fmv = loss_fn(work);
    *pscalars[s] = saved;
    double numeric = (fp - fmv) / (2.0 * step);
    double err = rel_err(*gscalars[s], numeric);
    rep.block_err.push_back({"fusion.gate_raw", err});
    rep.max_rel_err = std::max(rep.max_rel_err, err);
  }
  return rep;
}

// --- checkpoint -------------------------------------------------------------

using ordered_json = nlohmann::ordered_json;

static ordered_json mat_to_json(const Matrix& m) {
  return ordered_json(m.data());
}

static Matrix mat_from_json(const ordered_json& j, int rows, int cols) {
  Matrix m(rows, cols);
  auto v = j.get<std::vector<double>>();
  if (v.size() != m.data().size()) throw DataError("checkpoint matrix size mismatch");
  m.data() = std::move(v);
  return m;
}

std::string checkpoint_to_json(const Checkpoint& c) {
  const ModelParams& p = c.params;
  ordered_json j;
  j["version"] = 1;
  j["dims"] = {{"d0", p.dims.d0}, {"d", p.dims.d}, {"L", p.dims.L},
               {"d_a", p.dims.da}, {"d_task", p.dims.d_task}};
  j["layers"] = ordered_json::array();
  for (const auto& l : p.layers)
    j["layers"].push_back({{"W", mat_to_json(l.W)},
                           {"W_self", mat_to_json(l.W_self)}});
  j["attention"] = {{"Wq", mat_to_json(p.attention.Wq)},
                    {"Wk", mat_to_json(p.attention.Wk)},
                    {"Wv", mat_to_json(p.attention.Wv)}};
  j["gate_raw"] = p.fusion.gate_raw;
  j["policy"] = {{"W_assign", mat_to_json(p.policy.W_assign)},
                 {"W_class", mat_to_json(p.policy.W_class)}};
  j["rng_seed"] = p.rng_seed;
  if (!c.norm_mean.empty())
    j["norm"] = {{"mean", c.norm_mean}, {"std", c.norm_std}};
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  Checkpoint c;
  Dims dims;
  dims.d0 = j.at("dims").at("d0");
  dims.d = j.at("dims").at("d");
  dims.L = j.at("dims").at("L");
  dims.da = j.at("dims").at("d_a");
  dims.d_task = j.at("dims").at("d_task");
  ModelParams p = model_init(dims, j.at("rng_seed").get<uint64_t>());
  for (int l = 0; l < dims.L; ++l) {
    int din = p.layer_in_dim(l);
    p.layers[static_cast<size_t>(l)].W =
        mat_from_json(j.at("layers").at(l).at("W"), dims.d, din);
    p.layers[static_cast<size_t>(l)].W_self =
        mat_from_json(j.at("layers").at(l).at("W_self"), dims.d, din);
  }
  p.attention.Wq = mat_from_json(j.at("attention").at("Wq"), dims.da, dims.d);
  p.attention.Wk = mat_from_json(j.at("attention").at("Wk"), dims.da, dims.d);
  p.attention.Wv = mat_from_json(j.at("attention").at("Wv"), dims.da, dims.d);
  p.fusion.gate_raw = j.at("gate_raw");
  p.policy.W_assign =
      mat_from_json(j.at("policy").at("W_assign"), 1, dims.d + dims.d_task);
  p.policy.W_class = mat_from_json(j.at("policy").at("W_class"), 3, dims.d);
  c.params = std::move(p);
  if (j.contains("norm")) {
    c.norm_mean = j["norm"].at("mean").get<std::vector<double>>();
    c.norm_std = j["norm"].at("std").get<std::vector<double>>();
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f << checkpoint_to_json(c) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace dsched
