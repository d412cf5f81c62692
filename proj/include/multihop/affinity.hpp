#pragma once

#include <optional>
#include <string>
#include <vector>

#include "multihop/graph.hpp"

namespace multihop {

/// Node features, one sparse row per node.
using FeatureMatrix = SparseMatrix<double>;

struct MetaMeasure {
  std::string name;
  /// Per-node value; categorical measures are integer codes.
  std::vector<double> values;
  double beta = 0.0;
};

struct MetaTable {
  NodeId n = 0;
  std::vector<MetaMeasure> measures;

  /// Throws on length mismatch or negative beta.
  void validate() const;
};

enum class DistanceKind { correlation, l1 };

struct AffinityConfig {
  DistanceKind distance = DistanceKind::correlation;
  /// Kernel width; empty means the mean distance over the scored pairs.
  std::optional<double> sigma;
};

/// A(i, j) = number of measures t with |M_t(i) - M_t(j)| <= beta_t.
WeightedGraph meta_adjacency(const MetaTable& meta);

struct EdgeWeights {
  /// Same support as the requested pairs, weights exp(-rho^2 / (2 sigma^2)).
  WeightedGraph graph;
  double sigma = 0.0;
};

/// Gaussian-kernel weights for the pairs in `pairs` only; the dense N x N
/// kernel is never formed. Correlation mode rejects constant feature rows.
EdgeWeights feature_edge_weights(const FeatureMatrix& features, const WeightedGraph& pairs,
                                 const AffinityConfig& cfg);

/// Hadamard product on the support of `adjacency`; every adjacency edge must
/// carry a weight.
WeightedGraph build_affinity(const WeightedGraph& adjacency, const WeightedGraph& weights);

double l1_distance(const FeatureMatrix& f, NodeId a, NodeId b);
double correlation_distance(const FeatureMatrix& f, NodeId a, NodeId b);

std::string to_string(DistanceKind kind);
DistanceKind distance_from_string(const std::string& s);

/// CSV with header `node_id,<measure>...`; betas come from a {measure: beta}
/// JSON object. Every measure column needs a beta.
MetaTable load_meta_table(const std::string& csv_path, const std::string& betas_path);
void save_meta_table(const MetaTable& meta, const std::string& csv_path,
                     const std::string& betas_path);

}  // namespace multihop
