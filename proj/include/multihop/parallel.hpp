#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>

namespace multihop {

/// Worker count: an explicit positive request wins, else MULTIHOP_THREADS,
/// else 1.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MULTIHOP_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }
  return 1;
}

}  // namespace multihop
