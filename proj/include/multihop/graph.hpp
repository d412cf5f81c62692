#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace multihop {

using NodeId = std::int32_t;

template <class T>
using SparseMatrix = Eigen::SparseMatrix<T, Eigen::RowMajor, std::int32_t>;

struct Edge {
  NodeId i = 0;
  NodeId j = 0;
  double w = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undirected weighted graph over nodes [0, n).
///
/// Edges are stored once as sorted (i < j, w) triples; a symmetric
/// compressed adjacency index is built at construction. Instances are
/// immutable, so sharing across threads is safe.
class WeightedGraph {
 public:
  WeightedGraph() = default;
  explicit WeightedGraph(NodeId n) : n_(n), offsets_(static_cast<std::size_t>(n) + 1, 0) {
    if (n < 0) throw GraphError("negative node count");
  }

  /// Accepts edges in either orientation. Zero weights are dropped; negative
  /// or non-finite weights, self-loops, out-of-range ids and duplicate pairs
  /// are rejected.
  static WeightedGraph from_edges(NodeId n, std::vector<Edge> edges);

  NodeId n() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Neighbors of v in ascending order, with matching weights.
  std::span<const NodeId> neighbors(NodeId v) const {
    return {adj_.data() + offsets_[v], adj_.data() + offsets_[v + 1]};
  }
  std::span<const double> neighbor_weights(NodeId v) const {
    return {adj_w_.data() + offsets_[v], adj_w_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  double weighted_degree(NodeId v) const;

  /// 0 when (i, j) is not an edge or i == j.
  double weight(NodeId i, NodeId j) const;

  friend bool operator==(const WeightedGraph& a, const WeightedGraph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  NodeId n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adj_;
  std::vector<double> adj_w_;
};

enum class PropagationKind { renormalized, scaled_laplacian };

/// Symmetric sparse operator applied by a convolution layer.
struct PropagationMatrix {
  NodeId n = 0;
  SparseMatrix<double> entries;
  PropagationKind kind = PropagationKind::renormalized;

  template <class T>
  SparseMatrix<T> as() const {
    return entries.template cast<T>();
  }
};

/// D̃^{-1/2}(I + A)D̃^{-1/2} with weighted degrees D̃_ii = 1 + Σ_j A_ij.
PropagationMatrix sym_renormalize(const WeightedGraph& g);

/// (2 / lambda_max) L - I with L = I - D^{-1/2} A D^{-1/2}. Rows of isolated
/// nodes have L = 0, hence -1 on the diagonal.
PropagationMatrix scaled_laplacian(const WeightedGraph& g, double lambda_max);

struct LambdaEstimate {
  double value = 2.0;
  bool converged = false;
  bool fallback = true;
  int iterations = 0;
};

/// Power iteration for the largest eigenvalue of the normalized Laplacian.
/// Falls back to exactly 2.0 for edgeless graphs or when the Rayleigh
/// quotient has not settled within `iters` steps.
LambdaEstimate estimate_lambda_max(const WeightedGraph& g, int iters = 100, double tol = 1e-6);

// Serialization. JSON: {"n": int, "edges": [[i, j, w], ...]} with i < j sorted.
std::string to_json(const WeightedGraph& g);
WeightedGraph graph_from_json(const std::string& text);
void save_graph_json(const WeightedGraph& g, const std::string& path);
WeightedGraph load_graph_json(const std::string& path);
std::string to_dot(const WeightedGraph& g);

}  // namespace multihop
