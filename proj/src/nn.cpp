#include "multihop/nn.hpp"

namespace multihop {

double grad_check(const std::function<double(bool)>& objective,
                  std::span<Tensor2<double>* const> inputs, double eps) {
  for (auto* t : inputs) {
    if (t->requires_grad) t->grad_buffer().setZero();
  }
  objective(true);
  std::vector<Matrix<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto* t : inputs) analytic.push_back(t->requires_grad ? *t->grad : Matrix<double>());

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto* t = inputs[i];
    if (!t->requires_grad) continue;
    for (Eigen::Index e = 0; e < t->value.size(); ++e) {
      double& x = t->value.data()[e];
      const double saved = x;
      x = saved + eps;
      const double up = objective(false);
      x = saved - eps;
      const double down = objective(false);
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i].data()[e];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace multihop
