#include "dsched/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "dsched/util.hpp"

namespace dsched {

SystemGraph SystemGraph::build(int n, EdgeList edges, Matrix features,
                               std::vector<char> active) {
  if (n < 0) throw std::invalid_argument("node count negative");
  if (features.rows() != n)
    throw std::invalid_argument("feature rows != node count");
  if (!features.all_finite())
    throw std::invalid_argument("non-finite feature entries");

  SystemGraph g;
  g.n_ = n;
  g.features_ = std::move(features);
  g.active_ = active.empty() ? std::vector<char>(static_cast<size_t>(n), 1)
                             : std::move(active);
  if (static_cast<int>(g.active_.size()) != n)
    throw std::invalid_argument("active flag count != node count");

  std::set<std::pair<int, int>> dedup;
  for (auto [a, b] : edges) {
    if (a == b) throw std::invalid_argument("self-loop edge");
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::invalid_argument("edge endpoint out of range");
    dedup.insert({std::min(a, b), std::max(a, b)});
  }
  g.edges_.assign(dedup.begin(), dedup.end());

  g.adj_.assign(static_cast<size_t>(n), {});
  for (auto [a, b] : g.edges_) {
    g.adj_[static_cast<size_t>(a)].push_back(b);
    g.adj_[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& nb : g.adj_) std::sort(nb.begin(), nb.end());
  return g;
}

const std::vector<int>& SystemGraph::neighbors(NodeId i) const {
  if (i < 0 || i >= n_) throw std::invalid_argument("node id out of range");
  return adj_[static_cast<size_t>(i)];
}

int SystemGraph::degree(NodeId i) const {
  return static_cast<int>(neighbors(i).size());
}

bool SystemGraph::adjacent(NodeId i, NodeId j) const {
  const auto& nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

double SystemGraph::norm_coefficient(NodeId i, NodeId j) const {
  if (!adjacent(i, j))
    throw std::invalid_argument("norm_coefficient on non-adjacent pair");
  return 1.0 / std::sqrt(static_cast<double>(degree(i)) *
                         static_cast<double>(degree(j)));
}

const char* strategy_name(GraphStrategy::Kind k) {
  switch (k) {
    case GraphStrategy::Kind::Random: return "random";
    case GraphStrategy::Kind::StaticKnn: return "static-knn";
    case GraphStrategy::Kind::DynamicAdaptive: return "dynamic-adaptive";
  }
  return "?";
}

GraphStrategy::Kind strategy_from_name(const std::string& s) {
  if (s == "random") return GraphStrategy::Kind::Random;
  if (s == "static-knn") return GraphStrategy::Kind::StaticKnn;
  if (s == "dynamic-adaptive") return GraphStrategy::Kind::DynamicAdaptive;
  throw ConfigError("unknown graph strategy: " + s);
}

static EdgeList random_edges(int n, int edge_count, uint64_t seed) {
  long long max_edges = static_cast<long long>(n) * (n - 1) / 2;
  if (edge_count < 0 || edge_count > max_edges)
    throw ConfigError("edge_count exceeds n(n-1)/2");
  Rng rng(seed);
  std::set<std::pair<int, int>> chosen;
  while (static_cast<int>(chosen.size()) < edge_count) {
    int a = rng.uniform_int(0, n - 1);
    int b = rng.uniform_int(0, n - 1);
    if (a == b) continue;
    chosen.insert({std::min(a, b), std::max(a, b)});
  }
  return {chosen.begin(), chosen.end()};
}

static EdgeList knn_edges(int n, int k, const Matrix& features) {
  if (k >= n) throw ConfigError("knn k must be < n");
  std::set<std::pair<int, int>> chosen;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    dist.reserve(static_cast<size_t>(n) - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int c = 0; c < features.cols(); ++c) {
        double diff = features(i, c) - features(j, c);
        d2 += diff * diff;
      }
      dist.push_back({d2, j});
    }
    // ties broken by lower node id
    std::sort(dist.begin(), dist.end());
    for (int m = 0; m < k; ++m) {
      int j = dist[static_cast<size_t>(m)].second;
      chosen.insert({std::min(i, j), std::max(i, j)});
    }
  }
  return {chosen.begin(), chosen.end()};
}

EdgeList construct_topology(const GraphStrategy& strategy,
                            const Matrix& features, uint64_t rng_seed) {
  int n = features.rows();
  if (n < 2) throw ConfigError("topology needs at least 2 nodes");
  switch (strategy.kind) {
    case GraphStrategy::Kind::Random:
      return random_edges(n, strategy.edge_count, rng_seed);
    case GraphStrategy::Kind::StaticKnn:
    case GraphStrategy::Kind::DynamicAdaptive:
      return knn_edges(n, strategy.k, features);
  }
  throw ConfigError("bad strategy kind");
}

}  // namespace dsched
