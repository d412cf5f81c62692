#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "multihop/graph.hpp"

namespace multihop {

inline constexpr std::int32_t kUnreachable = std::numeric_limits<std::int32_t>::max();

/// Unweighted breadth-first hop counts from `source`; kUnreachable when no
/// path exists.
std::vector<std::int32_t> hop_distances(const WeightedGraph& g, NodeId source);

struct KhopOptions {
  bool exact_distance = true;
  /// DFS node expansions allowed per source vertex.
  std::uint64_t expansion_budget = 10'000'000;
  /// Worker threads over source vertices; 0 picks MULTIHOP_THREADS or 1.
  int threads = 0;
};

/// Weighted k-hop graph: for every pair joined by a simple path of exactly k
/// edges, the weight is the maximum over such paths of (sum of edge weights)
/// / k². With exact_distance, pairs whose hop distance differs from k are
/// dropped. Path sums are accumulated starting from the lower-numbered
/// endpoint so both orientations of a pair produce identical bits.
WeightedGraph build_khop(const WeightedGraph& g, int k, const KhopOptions& opts = {});

inline constexpr NodeId kOracleMaxNodes = 14;

/// Exhaustive reference for build_khop: enumerates every vertex sequence of
/// length k+1 and filters afterwards. Only for n <= kOracleMaxNodes.
WeightedGraph khop_oracle(const WeightedGraph& g, int k, bool exact_distance = true);

struct HopGraphSet {
  WeightedGraph base;
  /// hops[0] is the 1-hop graph (== base), hops[k-1] the k-hop graph.
  std::vector<WeightedGraph> hops;
  bool exact_distance = true;

  int max_hop() const { return static_cast<int>(hops.size()); }
  const WeightedGraph& hop(int k) const { return hops.at(static_cast<std::size_t>(k - 1)); }
};

HopGraphSet build_hop_set(const WeightedGraph& g, int max_hop, const KhopOptions& opts = {});

}  // namespace multihop
