#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace multihop {

/// Layer keys: conv, chebyshev, awc, elu, loss, model.
inline const std::vector<std::string> kGradcheckLayers{"conv", "chebyshev", "awc", "elu", "loss", "model"};

struct GradcheckCase {
  std::string name;
  std::string layer;
  int instance = 0;
  double max_rel_error = 0.0;
};

struct GradcheckSuite {
  std::vector<GradcheckCase> cases;

  double worst() const;
  bool passed(double tol) const { return worst() < tol; }
};

/// Finite-difference checks in double precision over `instances` random
/// problems: first-order conv, Chebyshev conv (K = 3), AWC, ELU, masked
/// cross-entropy, and whole models cycling through conv kinds and fusions
/// with dropout active under a replayed mask.
GradcheckSuite run_gradcheck_suite(int instances, std::uint64_t seed, double eps = 1e-5);

}  // namespace multihop
