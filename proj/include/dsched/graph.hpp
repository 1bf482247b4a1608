#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dsched/matrix.hpp"

namespace dsched {

using NodeId = int;
using EdgeList = std::vector<std::pair<int, int>>;  // stored with i < j

/// Undirected graph over the system nodes plus per-node feature rows.
/// Immutable after build(); readers may share it freely.
class SystemGraph {
 public:
  static SystemGraph build(int n, EdgeList edges, Matrix features,
                           std::vector<char> active = {});

  int n() const { return n_; }
  const EdgeList& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  const std::vector<char>& active() const { return active_; }

  /// Neighbors of i, ascending id, i itself never included.
  const std::vector<int>& neighbors(NodeId i) const;
  int degree(NodeId i) const;
  bool adjacent(NodeId i, NodeId j) const;

  /// 1/sqrt(deg(i) * deg(j)); requires {i,j} in the edge set.
  double norm_coefficient(NodeId i, NodeId j) const;

 private:
  int n_ = 0;
  EdgeList edges_;
  Matrix features_;
  std::vector<char> active_;
  std::vector<std::vector<int>> adj_;
};

struct GraphStrategy {
  enum class Kind { Random, StaticKnn, DynamicAdaptive };
  Kind kind = Kind::DynamicAdaptive;
  int k = 3;            // neighbor budget for the knn kinds
  int edge_count = 0;   // target for the random kind
};

const char* strategy_name(GraphStrategy::Kind k);
GraphStrategy::Kind strategy_from_name(const std::string& s);

/// Edge set for one snapshot. Random draws edge_count distinct pairs from
/// the seeded stream; the knn kinds connect each node to its k nearest
/// rows of `features` (Euclidean, ties to the lower id), symmetrized by
/// union. The caller freezes or recomputes per snapshot as the strategy
/// requires.
EdgeList construct_topology(const GraphStrategy& strategy,
                            const Matrix& features, uint64_t rng_seed);

}  // namespace dsched
