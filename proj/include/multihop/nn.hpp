#pragma once

// Differentiable kernels for the multi-hop network. Each op is a forward
// function plus an explicit backward; there is no general tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "multihop/graph.hpp"

namespace multihop {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
inline std::string shape(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace detail

template <class T>
struct Tensor2 {
  Matrix<T> value;
  std::optional<Matrix<T>> grad;
  bool requires_grad = false;

  Tensor2() = default;
  explicit Tensor2(Matrix<T> v, bool needs_grad = false)
      : value(std::move(v)), requires_grad(needs_grad) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }

  Matrix<T>& grad_buffer() {
    if (!grad || grad->rows() != rows() || grad->cols() != cols()) {
      grad = Matrix<T>::Zero(rows(), cols());
    }
    return *grad;
  }
  void zero_grad() {
    if (grad) grad->setZero();
  }
  bool all_finite() const { return value.allFinite() && (!grad || grad->allFinite()); }
};

// ---------------------------------------------------------------------------
// First-order graph convolution: out = P h theta.
// `prop` must be symmetric (true for every PropagationMatrix).

template <class T, class Input>
Matrix<T> gcn_layer_forward(const SparseMatrix<T>& prop, const Input& h, const Matrix<T>& theta) {
  if (prop.rows() != prop.cols() || prop.rows() != h.rows() || h.cols() != theta.rows()) {
    throw ShapeError("gcn layer: prop " + detail::shape(prop.rows(), prop.cols()) + ", h " +
                     detail::shape(h.rows(), h.cols()) + ", theta " +
                     detail::shape(theta.rows(), theta.cols()));
  }
  Matrix<T> hw = h * theta;
  return prop * hw;
}

template <class T, class Input>
void gcn_layer_backward(const SparseMatrix<T>& prop, const Input& h, const Matrix<T>& theta,
                        const Matrix<T>& grad_out, Matrix<T>& grad_theta, Matrix<T>* grad_h) {
  const Matrix<T> u = prop * grad_out;
  grad_theta.noalias() += h.transpose() * u;
  if (grad_h) grad_h->noalias() += u * theta.transpose();
}

// ---------------------------------------------------------------------------
// Chebyshev filter: out = sum_k T_k(L) h theta_k with T_0 = I, T_1 = L,
// T_k = 2 L T_{k-1} - T_{k-2}. The forward pass uses Clenshaw's recurrence on
// the N x F products h theta_k, so the basis T_k(L) h is never materialized.

template <class T, class Input>
Matrix<T> cheb_layer_forward(const SparseMatrix<T>& lap, const Input& h,
                             std::span<const Matrix<T>> thetas) {
  if (thetas.size() < 2) throw ShapeError("chebyshev layer needs order K >= 1");
  if (lap.rows() != lap.cols() || lap.rows() != h.rows()) {
    throw ShapeError("chebyshev layer: laplacian " + detail::shape(lap.rows(), lap.cols()) +
                     ", h " + detail::shape(h.rows(), h.cols()));
  }
  const auto F = thetas[0].cols();
  for (const auto& t : thetas) {
    if (t.rows() != h.cols() || t.cols() != F) {
      throw ShapeError("chebyshev layer: theta " + detail::shape(t.rows(), t.cols()) +
                       " does not match h " + detail::shape(h.rows(), h.cols()));
    }
  }
  const auto K = thetas.size() - 1;
  Matrix<T> b1 = Matrix<T>::Zero(h.rows(), F);  // b_{k+1}
  Matrix<T> b2 = Matrix<T>::Zero(h.rows(), F);  // b_{k+2}
  for (std::size_t k = K; k >= 1; --k) {
    Matrix<T> bk = h * thetas[k];
    bk.noalias() += T(2) * (lap * b1);
    bk -= b2;
    b2.swap(b1);
    b1.swap(bk);
  }
  Matrix<T> out = h * thetas[0];
  out.noalias() += lap * b1;
  out -= b2;
  return out;
}

template <class T, class Input>
void cheb_layer_backward(const SparseMatrix<T>& lap, const Input& h,
                         std::span<const Matrix<T>> thetas, const Matrix<T>& grad_out,
                         std::span<Matrix<T>> grad_thetas, Matrix<T>* grad_h) {
  Matrix<T> prev = grad_out;  // T_0(L) G
  Matrix<T> cur;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    if (k == 1) {
      cur = lap * grad_out;
    } else if (k >= 2) {
      Matrix<T> next = T(2) * (lap * cur);
      next -= prev;
      prev.swap(cur);
      cur.swap(next);
    }
    const Matrix<T>& u = k == 0 ? prev : cur;
    grad_thetas[k].noalias() += h.transpose() * u;
    if (grad_h) grad_h->noalias() += u * thetas[k].transpose();
  }
}

// ---------------------------------------------------------------------------
// ELU with alpha = 1.

template <class T>
Matrix<T> elu(const Matrix<T>& x) {
  return x.unaryExpr([](T v) { return v > T(0) ? v : std::expm1(v); });
}

/// grad_in = grad_out * elu'(x), written via the forward output.
template <class T>
Matrix<T> elu_backward(const Matrix<T>& out, const Matrix<T>& grad_out) {
  return grad_out.binaryExpr(out, [](T g, T y) { return y > T(0) ? g : g * (y + T(1)); });
}

// ---------------------------------------------------------------------------
// Inverted dropout. Each 64-bit draw yields two 32-bit keep decisions.

class KeepStream {
 public:
  KeepStream(Rng& rng, double rate)
      : rng_(rng), threshold_(static_cast<std::uint64_t>(std::llround(rate * 4294967296.0))) {}

  bool keep() {
    if (left_ == 0) {
      bits_ = rng_();
      left_ = 2;
    }
    const auto draw = static_cast<std::uint32_t>(bits_);
    bits_ >>= 32;
    --left_;
    return draw >= threshold_;
  }

 private:
  Rng& rng_;
  std::uint64_t threshold_;
  std::uint64_t bits_ = 0;
  int left_ = 0;
};

inline void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

/// Returns the per-entry scale (0 or 1/(1-rate)) to use in backward.
template <class T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  check_dropout_rate(rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  Matrix<T> mask(rows, cols);
  KeepStream ks(rng, rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = ks.keep() ? scale : T(0);
  return mask;
}

/// Dense dropout; `mask` receives the scales when training is on.
template <class T>
Matrix<T> dropout(const Matrix<T>& h, double rate, Rng& rng, bool training,
                  Matrix<T>* mask = nullptr) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) {
    if (mask) *mask = Matrix<T>::Ones(h.rows(), h.cols());
    return h;
  }
  Matrix<T> m = dropout_mask<T>(h.rows(), h.cols(), rate, rng);
  Matrix<T> out = h.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return out;
}

/// Sparse dropout: only stored entries are drawn, matching dense dropout on
/// the same matrix since zeros stay zero.
template <class T>
SparseMatrix<T> dropout(const SparseMatrix<T>& h, double rate, Rng& rng, bool training) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) return h;
  SparseMatrix<T> out = h;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  KeepStream ks(rng, rate);
  T* v = out.valuePtr();
  for (Eigen::Index k = 0; k < out.nonZeros(); ++k) v[k] = ks.keep() ? v[k] * scale : T(0);
  return out;
}

// ---------------------------------------------------------------------------
// Masked softmax cross-entropy, mean over the masked rows.

template <class T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> grad;  // d loss / d logits
};

template <class T>
LossResult<T> masked_softmax_xent(const Matrix<T>& logits, std::span<const int> labels,
                                  std::span<const NodeId> mask) {
  if (mask.empty()) throw std::invalid_argument("loss mask is empty");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw ShapeError("labels size " + std::to_string(labels.size()) + " vs logits rows " +
                     std::to_string(logits.rows()));
  }
  LossResult<T> r;
  r.grad = Matrix<T>::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (NodeId v : mask) {
    const int y = labels[v];
    if (y < 0 || y >= logits.cols()) {
      throw std::invalid_argument("label " + std::to_string(y) + " of node " + std::to_string(v) +
                                  " out of range");
    }
    const auto row = logits.row(v);
    const double mx = static_cast<double>(row.maxCoeff());
    double z = 0.0;
    for (Eigen::Index c = 0; c < row.size(); ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - static_cast<double>(row[y])) * inv;
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      const double p = std::exp(static_cast<double>(row[c]) - log_z);
      r.grad(v, c) = static_cast<T>((p - (c == y ? 1.0 : 0.0)) * inv);
    }
  }
  return r;
}

/// Fraction of masked rows whose argmax (lowest index on ties) equals the label.
template <class T>
double masked_accuracy(const Matrix<T>& logits, std::span<const int> labels,
                       std::span<const NodeId> mask) {
  if (mask.empty()) return 0.0;
  std::size_t hit = 0;
  for (NodeId v : mask) {
    Eigen::Index arg = 0;
    logits.row(v).maxCoeff(&arg);
    if (arg == labels[v]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(mask.size());
}

// ---------------------------------------------------------------------------
// L2 penalty: weight * sum ||theta||^2.

template <class T>
double l2_penalty(std::span<Tensor2<T>* const> params, double weight) {
  double s = 0.0;
  for (const auto* p : params) s += static_cast<double>(p->value.squaredNorm());
  return weight * s;
}

template <class T>
void l2_backward(std::span<Tensor2<T>* const> params, double weight) {
  if (weight == 0.0) return;
  for (auto* p : params) p->grad_buffer() += static_cast<T>(2.0 * weight) * p->value;
}

// ---------------------------------------------------------------------------
// Adaptive weight computation: per-node softmax over branches of
// tanh(H_j(v,:) alpha), then a convex combination of the branch rows.

template <class T>
struct AwcResult {
  Matrix<T> fused;    // N x C
  Matrix<T> weights;  // N x k, rows sum to 1
  Matrix<T> scores;   // N x k, tanh(H_j alpha)
};

template <class T>
void check_branches(std::span<const Matrix<T>> branches) {
  if (branches.empty()) throw ShapeError("fusion needs at least one branch");
  for (const auto& b : branches) {
    if (b.rows() != branches[0].rows() || b.cols() != branches[0].cols()) {
      throw ShapeError("branch output " + detail::shape(b.rows(), b.cols()) + " differs from " +
                       detail::shape(branches[0].rows(), branches[0].cols()));
    }
  }
}

template <class T>
AwcResult<T> awc_forward(std::span<const Matrix<T>> branches, const Matrix<T>& alpha) {
  check_branches(branches);
  const auto N = branches[0].rows(), C = branches[0].cols();
  const auto k = static_cast<Eigen::Index>(branches.size());
  if (alpha.rows() != C || alpha.cols() != 1) {
    throw ShapeError("awc alpha " + detail::shape(alpha.rows(), alpha.cols()) + ", expected " +
                     detail::shape(C, 1));
  }
  AwcResult<T> r;
  r.scores.resize(N, k);
  for (Eigen::Index j = 0; j < k; ++j) r.scores.col(j) = (branches[j] * alpha).array().tanh();
  r.weights.resize(N, k);
  for (Eigen::Index v = 0; v < N; ++v) {
    const T mx = r.scores.row(v).maxCoeff();
    T z = 0;
    for (Eigen::Index j = 0; j < k; ++j) z += (r.weights(v, j) = std::exp(r.scores(v, j) - mx));
    r.weights.row(v) /= z;
  }
  r.fused = Matrix<T>::Zero(N, C);
  for (Eigen::Index j = 0; j < k; ++j) {
    r.fused.noalias() += r.weights.col(j).asDiagonal() * branches[j];
  }
  return r;
}

template <class T>
void awc_backward(std::span<const Matrix<T>> branches, const Matrix<T>& alpha,
                  const AwcResult<T>& fwd, const Matrix<T>& grad_fused,
                  std::span<Matrix<T>> grad_branches, Matrix<T>& grad_alpha) {
  const auto N = grad_fused.rows();
  const auto k = static_cast<Eigen::Index>(branches.size());
  // d loss / d w_j(v) = G(v,:) . H_j(v,:)
  Matrix<T> dw(N, k);
  for (Eigen::Index j = 0; j < k; ++j) dw.col(j) = grad_fused.cwiseProduct(branches[j]).rowwise().sum();
  // Softmax then tanh: d pre_j(v) = w_j (dw_j - sum_t w_t dw_t) (1 - s_j^2).
  Matrix<T> dpre(N, k);
  for (Eigen::Index v = 0; v < N; ++v) {
    const T avg = fwd.weights.row(v).dot(dw.row(v));
    for (Eigen::Index j = 0; j < k; ++j) {
      const T s = fwd.scores(v, j);
      dpre(v, j) = fwd.weights(v, j) * (dw(v, j) - avg) * (T(1) - s * s);
    }
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    grad_branches[j].noalias() += fwd.weights.col(j).asDiagonal() * grad_fused;
    grad_branches[j].noalias() += dpre.col(j) * alpha.transpose();
    grad_alpha.noalias() += branches[j].transpose() * dpre.col(j);
  }
}

template <class T>
Matrix<T> sum_fusion(std::span<const Matrix<T>> branches) {
  check_branches(branches);
  Matrix<T> out = branches[0];
  for (std::size_t j = 1; j < branches.size(); ++j) out += branches[j];
  return out;
}

/// Elementwise max over branches; `argmax` records the winning branch (lowest
/// index on ties) for the backward pass.
template <class T>
Matrix<T> max_fusion(std::span<const Matrix<T>> branches,
                     Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>* argmax) {
  check_branches(branches);
  Matrix<T> out = branches[0];
  if (argmax) argmax->setZero(out.rows(), out.cols());
  for (std::size_t j = 1; j < branches.size(); ++j) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (branches[j].data()[i] > out.data()[i]) {
        out.data()[i] = branches[j].data()[i];
        if (argmax) argmax->data()[i] = static_cast<int>(j);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

template <class T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    set_lr(lr);
  }

  void set_lr(double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    lr_ = lr;
  }
  double lr() const { return lr_; }
  long steps() const { return t_; }

  /// Parameters without a gradient buffer are left untouched.
  void step(std::span<Tensor2<T>* const> params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
      }
    }
    if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed size");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (!p->grad) continue;
      const auto& g = *p->grad;
      if (g.rows() != m_[i].rows() || g.cols() != m_[i].cols()) throw ShapeError("adam: shape changed");
      m_[i] = T(beta1_) * m_[i] + T(1.0 - beta1_) * g;
      v_[i] = T(beta2_) * v_[i] + T(1.0 - beta2_) * g.cwiseProduct(g);
      const T a = static_cast<T>(lr_ / c1);
      const T inv_c2 = static_cast<T>(1.0 / c2);
      const T eps = static_cast<T>(eps_);
      p->value.array() -=
          a * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  const std::vector<Matrix<T>>& first_moments() const { return m_; }
  const std::vector<Matrix<T>>& second_moments() const { return v_; }

 private:
  double lr_ = 0.0, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

// ---------------------------------------------------------------------------

/// Glorot/Xavier uniform on [-r, r], r = sqrt(6 / (rows + cols)).
template <class T>
Matrix<T> glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-r, r);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

/// Central finite differences against reverse-mode gradients.
///
/// `objective(true)` must evaluate the scalar and accumulate gradients into
/// every input's grad buffer (they are zeroed beforehand); `objective(false)`
/// only evaluates. Returns max |a - n| / max(|a|, |n|, 1e-8) over all entries
/// of inputs with requires_grad.
double grad_check(const std::function<double(bool)>& objective,
                  std::span<Tensor2<double>* const> inputs, double eps = 1e-5);

}  // namespace multihop
