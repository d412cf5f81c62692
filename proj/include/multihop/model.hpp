#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "multihop/khop.hpp"
#include "multihop/nn.hpp"

namespace multihop {

enum class ConvKind { first_order, chebyshev };
enum class Fusion { awc, sum, max };

std::string to_string(ConvKind c);
std::string to_string(Fusion f);
ConvKind conv_from_string(const std::string& s);
Fusion fusion_from_string(const std::string& s);

struct ModelConfig {
  int branches = 1;
  ConvKind conv = ConvKind::first_order;
  /// Chebyshev order K (K + 1 parameter matrices per layer).
  int cheb_order = 3;
  /// Output width of each conv layer; the last one is the class count.
  std::vector<int> layer_widths{16, 2};
  Fusion fusion = Fusion::awc;
  double dropout_rate = 0.5;
  double l2_weight = 5e-4;

  /// `classes` < 0 skips the last-width check.
  void validate(int classes = -1) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Per-branch operator: renormalized adjacency for first-order branches,
/// scaled Laplacian (lambda_max by power iteration) for Chebyshev ones.
PropagationMatrix branch_propagation(const WeightedGraph& hop_graph, ConvKind conv);

template <class T>
struct ForwardResult {
  Matrix<T> logits;                  // N x C, pre-softmax
  std::optional<Matrix<T>> weights;  // N x branches, AWC fusion only
  std::vector<Matrix<T>> branch_outputs;
};

struct LossBreakdown {
  double total = 0.0;
  double data = 0.0;
  double l2 = 0.0;
};

template <class T>
class MultiHopModel {
 public:
  struct Branch {
    SparseMatrix<T> prop;
    /// layers[l][k]: order-k matrix of layer l (a single matrix for first-order).
    std::vector<std::vector<Tensor2<T>>> layers;
  };

  /// Branch b is bound to hops.hop(b + 1).
  static MultiHopModel build(const ModelConfig& cfg, const HopGraphSet& hops, int in_dim, Rng& rng);
  /// Same, from precomputed per-branch operators.
  static MultiHopModel build(const ModelConfig& cfg, std::span<const PropagationMatrix> props,
                             int in_dim, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  int in_dim() const { return in_dim_; }
  std::vector<Branch>& branches() { return branches_; }
  const std::vector<Branch>& branches() const { return branches_; }
  Tensor2<T>& alpha() { return alpha_; }
  const Tensor2<T>& alpha() const { return alpha_; }

  /// Every trainable tensor: conv matrices in (branch, layer, order) order,
  /// then alpha when fusion is AWC.
  std::vector<Tensor2<T>*> parameters();
  std::vector<const Tensor2<T>*> parameters() const;
  /// Conv matrices only (the L2-regularized set).
  std::vector<Tensor2<T>*> conv_parameters();
  /// Names matching parameters(), e.g. "branch1.layer0.order2", "awc.alpha".
  std::vector<std::string> parameter_names() const;

  ForwardResult<T> forward(const SparseMatrix<T>& features, bool training, Rng& rng) const;

  /// Training-mode forward, masked cross-entropy + L2, and gradients into
  /// every parameter's grad buffer (previous contents are overwritten).
  LossBreakdown loss_and_grads(const SparseMatrix<T>& features, std::span<const int> labels,
                               std::span<const NodeId> train_mask, Rng& rng);
  /// Same but with dropout optionally disabled (used by gradient checks).
  LossBreakdown loss_and_grads(const SparseMatrix<T>& features, std::span<const int> labels,
                               std::span<const NodeId> train_mask, Rng& rng, bool training);

  std::vector<Matrix<T>> snapshot() const;
  void restore(const std::vector<Matrix<T>>& values);

 private:
  struct BranchTrace {
    SparseMatrix<T> input;
    std::vector<Matrix<T>> hidden_in;  // inputs of layers 1.., after dropout
    std::vector<Matrix<T>> masks;      // dropout scales for hidden_in
    std::vector<Matrix<T>> activated;  // ELU outputs of layers 0..L-2
    Matrix<T> output;
  };
  struct Trace {
    std::vector<BranchTrace> branches;
    std::vector<Matrix<T>> outputs;
    std::optional<AwcResult<T>> awc;
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax;
    Matrix<T> logits;
  };

  Trace run(const SparseMatrix<T>& features, bool training, Rng& rng) const;
  Matrix<T> conv_forward(const Branch& b, std::size_t layer, const auto& h) const;
  void conv_backward(Branch& b, std::size_t layer, const auto& h, const Matrix<T>& grad_out,
                     Matrix<T>* grad_h);

  ModelConfig cfg_;
  int in_dim_ = 0;
  std::vector<Branch> branches_;
  Tensor2<T> alpha_;
};

extern template class MultiHopModel<float>;
extern template class MultiHopModel<double>;

/// Flat little-endian float32 payload plus a JSON manifest of
/// {name, shape, offset} entries (offset in elements).
template <class T>
void save_checkpoint(const MultiHopModel<T>& model, const std::string& bin_path,
                     const std::string& manifest_path);
template <class T>
void load_checkpoint(MultiHopModel<T>& model, const std::string& bin_path,
                     const std::string& manifest_path);

}  // namespace multihop
