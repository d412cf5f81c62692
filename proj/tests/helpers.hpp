#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>

#include <Eigen/Dense>

#include "multihop/graph.hpp"

namespace testing {

using multihop::Edge;
using multihop::NodeId;
using multihop::WeightedGraph;

inline WeightedGraph random_graph(NodeId n, double p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (u(rng) < p) edges.push_back({i, j, 1.0 - u(rng)});
  return WeightedGraph::from_edges(n, std::move(edges));
}

inline Eigen::MatrixXd dense_adjacency(const WeightedGraph& g) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.n(), g.n());
  for (const auto& e : g.edges()) a(e.i, e.j) = a(e.j, e.i) = e.w;
  return a;
}

template <class Sparse>
Eigen::MatrixXd dense(const Sparse& s) {
  return Eigen::MatrixXd(s.template cast<double>());
}

inline Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline std::vector<std::vector<int>> floyd_warshall(const WeightedGraph& g) {
  const int n = g.n();
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& e : g.edges()) d[e.i][e.j] = d[e.j][e.i] = 1;
  for (int m = 0; m < n; ++m)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][m] + d[m][j]);
  return d;
}

/// Simple-path enumeration written independently of the library: extends
/// every path from the lower endpoint and keeps the best sum per pair.
inline WeightedGraph enumerate_paths(const WeightedGraph& g, int k, bool exact) {
  const auto dist = floyd_warshall(g);
  std::map<std::pair<NodeId, NodeId>, double> best;
  std::vector<NodeId> path;
  std::function<void(NodeId, double)> walk = [&](NodeId at, double sum) {
    if (static_cast<int>(path.size()) == k + 1) {
      const NodeId a = path.front(), b = path.back();
      if (b <= a) return;
      const double w = sum / (static_cast<double>(k) * static_cast<double>(k));
      auto [it, fresh] = best.emplace(std::make_pair(a, b), w);
      if (!fresh && w > it->second) it->second = w;
      return;
    }
    for (NodeId u = 0; u < g.n(); ++u) {
      const double w = g.weight(at, u);
      if (w == 0.0 || std::find(path.begin(), path.end(), u) != path.end()) continue;
      path.push_back(u);
      walk(u, sum + w);
      path.pop_back();
    }
  };
  for (NodeId s = 0; s < g.n(); ++s) {
    path = {s};
    walk(s, 0.0);
  }
  std::vector<Edge> edges;
  for (const auto& [pair, w] : best) {
    if (exact && dist[pair.first][pair.second] != k) continue;
    edges.push_back({pair.first, pair.second, w});
  }
  return WeightedGraph::from_edges(g.n(), std::move(edges));
}

inline bool bitwise_equal(const WeightedGraph& a, const WeightedGraph& b) {
  if (a.n() != b.n() || a.num_edges() != b.num_edges()) return false;
  for (std::size_t e = 0; e < a.num_edges(); ++e) {
    const auto &x = a.edges()[e], &y = b.edges()[e];
    if (x.i != y.i || x.j != y.j) return false;
    if (std::bit_cast<std::uint64_t>(x.w) != std::bit_cast<std::uint64_t>(y.w)) return false;
  }
  return true;
}

/// Two-layer GCN written out densely: P elu(P X W0) W1 with
/// P = D^-1/2 (I + A) D^-1/2.
inline Eigen::MatrixXd reference_gcn(const WeightedGraph& g, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& w0, const Eigen::MatrixXd& w1) {
  const Eigen::Index n = g.n();
  Eigen::MatrixXd a = dense_adjacency(g);
  for (Eigen::Index i = 0; i < n; ++i) a(i, i) += 1.0;
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) deg[i] += a(i, j);
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = a(i, j) / std::sqrt(deg[i] * deg[j]);
  Eigen::MatrixXd h = p * (x * w0);
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    double& v = h.data()[i];
    if (v <= 0.0) v = std::exp(v) - 1.0;
  }
  return p * (h * w1);
}

}  // namespace testing
