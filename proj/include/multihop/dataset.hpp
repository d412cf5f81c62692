#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "multihop/affinity.hpp"
#include "multihop/csv.hpp"
#include "multihop/graph.hpp"

namespace multihop {

struct Splits {
  std::vector<NodeId> train, val, test;

  bool empty() const { return train.empty() && val.empty() && test.empty(); }
};

struct Dataset {
  std::string name;
  NodeId n = 0;
  int classes = 0;
  int feature_dim = 0;
  FeatureMatrix features;
  /// Class id per node; -1 marks an unlabeled node.
  std::vector<int> labels;
  std::optional<WeightedGraph> graph;
  std::optional<MetaTable> meta;
  Splits splits;
  /// Free-form provenance: split origin, generator diagnostics.
  nlohmann::json info = nlohmann::json::object();

  /// Shape consistency, label range, graph/meta sizes, and (when splits are
  /// present) disjoint labeled masks with every class in train.
  void validate() const;
};

/// Reads the portable directory layout (meta.json, features.csv, labels.csv,
/// edges.tsv, optional splits.json, optional meta_measures.csv + betas.json).
/// Errors carry file:line diagnostics.
Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& ds, const std::string& dir);

/// `node_id,idx:val,...` rows for nodes 0..n-1; dim < 0 infers the width
/// from the largest index.
FeatureMatrix load_features_csv(const std::string& path, NodeId n, int dim = -1);

/// Stable content hash (FNV-1a over the canonical fields) for reports.
std::string dataset_hash(const Dataset& ds);

/// Fixed split: the first `per_class` labeled nodes of every class in node
/// order go to train; `n_val` then `n_test` nodes are drawn from the rest
/// with a seeded shuffle.
Dataset planetoid_split(Dataset ds, std::uint64_t seed = 0, int per_class = 20, int n_val = 500,
                        int n_test = 1000);

struct Fold {
  std::vector<NodeId> train, test;
};

/// Stratified k-fold over labeled nodes (label >= 0). Fold sizes differ by at
/// most one, and each fold holds floor or ceil of (class size * fold size /
/// labeled count) nodes of every class. Members are shuffled per class.
std::vector<Fold> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

/// Seeded stratified split with the given train/val/test fractions
/// (sum <= 1); remainders go to test.
Splits random_split(std::span<const int> labels, double train_frac, double val_frac,
                    std::uint64_t seed);

/// Pulls a stratified `fraction` of `train` out as a validation set.
std::pair<std::vector<NodeId>, std::vector<NodeId>> carve_validation(
    std::span<const NodeId> train, std::span<const int> labels, double fraction,
    std::uint64_t seed);

struct TwoHopOptions {
  /// Expected planted degree.
  int degree = 4;
  /// Mean shift of the label column; per-node features are near-noise.
  double signal = 0.15;
  /// Chance per node of one extra uniformly random edge.
  double bridge_rate = 0.1;
  int noise_dims = 0;  // extra label-free feature columns; 0 means `classes`
};

/// Planted two-hop fixture. Every node has a label and an independent
/// "anchor" class; planted edges join v and u only when label(u) = anchor(v)
/// and anchor(u) = label(v). Neighbors' classes are therefore independent of
/// a node's label, while exact-2-hop neighbors share it. Features are
/// Gaussian noise, centered within each (label, anchor) cell, plus a weak
/// shift `signal` on the label column: too weak to classify a single node
/// but informative when averaged over the 2-hop ring.
/// Random bridge edges, plus one per leftover component, make the unit-weight
/// graph connected. The split
/// is a stratified 60/20/20. info["probe_1hop_acc"] holds the 5-fold accuracy
/// of a softmax probe on [x_v, mean 1-hop x] and info["majority_acc"] the
/// majority-class rate.
Dataset synth_twohop(NodeId n, int classes, std::uint64_t seed, const TwoHopOptions& opts = {});

/// Medical-style fixture: dense features with class-dependent means plus a
/// meta table (age with beta 2, gender and site with beta 0) partially
/// correlated with the class. No predefined graph.
Dataset synth_tabular(NodeId n, int classes, int feature_dim, std::uint64_t seed);

/// Multinomial logistic regression trained by full-batch gradient descent on
/// `train`, evaluated on `eval`.
double linear_probe_accuracy(const Eigen::MatrixXd& x, std::span<const int> labels, int classes,
                             std::span<const NodeId> train, std::span<const NodeId> eval,
                             int iters = 500, double lr = 0.5);

/// Scales each feature row to unit L1 norm (empty rows untouched).
FeatureMatrix row_normalize(const FeatureMatrix& f);

}  // namespace multihop
