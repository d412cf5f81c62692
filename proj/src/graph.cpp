#include "multihop/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace multihop {

WeightedGraph WeightedGraph::from_edges(NodeId n, std::vector<Edge> edges) {
  WeightedGraph g(n);
  for (auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) {
      throw GraphError("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                       ") out of range for n=" + std::to_string(n));
    }
    if (e.i == e.j) throw GraphError("self-loop on node " + std::to_string(e.i));
    if (!std::isfinite(e.w) || e.w < 0.0) {
      throw GraphError("invalid weight on edge (" + std::to_string(e.i) + ", " +
                       std::to_string(e.j) + ")");
    }
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::erase_if(edges, [](const Edge& e) { return e.w == 0.0; });
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (edges[k].i == edges[k - 1].i && edges[k].j == edges[k - 1].j) {
      throw GraphError("duplicate edge (" + std::to_string(edges[k].i) + ", " +
                       std::to_string(edges[k].j) + ")");
    }
  }

  std::vector<std::size_t> deg(static_cast<std::size_t>(n), 0);
  for (const auto& e : edges) {
    ++deg[e.i];
    ++deg[e.j];
  }
  for (NodeId v = 0; v < n; ++v) g.offsets_[v + 1] = g.offsets_[v] + deg[v];
  g.adj_.resize(2 * edges.size());
  g.adj_w_.resize(2 * edges.size());
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  // Edges are sorted by (i, j), so rows come out ascending for the j side;
  // the i side is re-sorted below.
  for (const auto& e : edges) {
    g.adj_[fill[e.i]] = e.j;
    g.adj_w_[fill[e.i]++] = e.w;
    g.adj_[fill[e.j]] = e.i;
    g.adj_w_[fill[e.j]++] = e.w;
  }
  std::vector<std::pair<NodeId, double>> row;
  for (NodeId v = 0; v < n; ++v) {
    const auto lo = g.offsets_[v], hi = g.offsets_[v + 1];
    row.clear();
    for (auto k = lo; k < hi; ++k) row.emplace_back(g.adj_[k], g.adj_w_[k]);
    std::sort(row.begin(), row.end());
    for (auto k = lo; k < hi; ++k) {
      g.adj_[k] = row[k - lo].first;
      g.adj_w_[k] = row[k - lo].second;
    }
  }
  g.edges_ = std::move(edges);
  return g;
}

double WeightedGraph::weighted_degree(NodeId v) const {
  double d = 0.0;
  for (double w : neighbor_weights(v)) d += w;
  return d;
}

double WeightedGraph::weight(NodeId i, NodeId j) const {
  if (i < 0 || j < 0 || i >= n_ || j >= n_ || i == j) return 0.0;
  auto nb = neighbors(i);
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return 0.0;
  return neighbor_weights(i)[static_cast<std::size_t>(it - nb.begin())];
}

PropagationMatrix sym_renormalize(const WeightedGraph& g) {
  const NodeId n = g.n();
  std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) inv_sqrt[v] = 1.0 / std::sqrt(1.0 + g.weighted_degree(v));

  std::vector<Eigen::Triplet<double, std::int32_t>> trip;
  trip.reserve(static_cast<std::size_t>(n) + 2 * g.num_edges());
  for (NodeId v = 0; v < n; ++v) trip.emplace_back(v, v, inv_sqrt[v] * inv_sqrt[v]);
  for (const auto& e : g.edges()) {
    const double a = inv_sqrt[e.i] * e.w * inv_sqrt[e.j];
    trip.emplace_back(e.i, e.j, a);
    trip.emplace_back(e.j, e.i, a);
  }
  PropagationMatrix p;
  p.n = n;
  p.kind = PropagationKind::renormalized;
  p.entries.resize(n, n);
  p.entries.setFromTriplets(trip.begin(), trip.end());
  p.entries.makeCompressed();
  return p;
}

namespace {

std::vector<double> inv_sqrt_degrees(const WeightedGraph& g) {
  std::vector<double> out(static_cast<std::size_t>(g.n()), 0.0);
  for (NodeId v = 0; v < g.n(); ++v) {
    const double d = g.weighted_degree(v);
    out[v] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  return out;
}

// y = L x for the normalized Laplacian (isolated rows are zero).
void apply_laplacian(const WeightedGraph& g, const std::vector<double>& isd,
                     const std::vector<double>& x, std::vector<double>& y) {
  for (NodeId v = 0; v < g.n(); ++v) {
    if (isd[v] == 0.0) {
      y[v] = 0.0;
      continue;
    }
    double acc = 0.0;
    auto nb = g.neighbors(v);
    auto wt = g.neighbor_weights(v);
    for (std::size_t k = 0; k < nb.size(); ++k) acc += wt[k] * isd[nb[k]] * x[nb[k]];
    y[v] = x[v] - isd[v] * acc;
  }
}

}  // namespace

PropagationMatrix scaled_laplacian(const WeightedGraph& g, double lambda_max) {
  if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) {
    throw GraphError("lambda_max must be positive, got " + std::to_string(lambda_max));
  }
  const NodeId n = g.n();
  const auto isd = inv_sqrt_degrees(g);
  const double scale = 2.0 / lambda_max;

  std::vector<Eigen::Triplet<double, std::int32_t>> trip;
  trip.reserve(static_cast<std::size_t>(n) + 2 * g.num_edges());
  for (NodeId v = 0; v < n; ++v) {
    const double l_vv = isd[v] > 0.0 ? 1.0 : 0.0;
    trip.emplace_back(v, v, scale * l_vv - 1.0);
  }
  for (const auto& e : g.edges()) {
    const double l_ij = -isd[e.i] * e.w * isd[e.j];
    trip.emplace_back(e.i, e.j, scale * l_ij);
    trip.emplace_back(e.j, e.i, scale * l_ij);
  }
  PropagationMatrix p;
  p.n = n;
  p.kind = PropagationKind::scaled_laplacian;
  p.entries.resize(n, n);
  p.entries.setFromTriplets(trip.begin(), trip.end());
  p.entries.prune(0.0);
  p.entries.makeCompressed();
  return p;
}

LambdaEstimate estimate_lambda_max(const WeightedGraph& g, int iters, double tol) {
  LambdaEstimate est;
  if (g.n() == 0 || g.num_edges() == 0) return est;

  const auto n = static_cast<std::size_t>(g.n());
  const auto isd = inv_sqrt_degrees(g);
  std::vector<double> x(n), y(n);
  // Deterministic, non-symmetric start vector.
  for (std::size_t v = 0; v < n; ++v) {
    std::uint64_t z = (v + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 31;
    x[v] = 0.5 + static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  auto normalize = [](std::vector<double>& vec) {
    double s = 0.0;
    for (double e : vec) s += e * e;
    s = std::sqrt(s);
    if (s == 0.0) return false;
    for (double& e : vec) e /= s;
    return true;
  };
  normalize(x);

  double prev = 0.0;
  for (int it = 1; it <= iters; ++it) {
    apply_laplacian(g, isd, x, y);
    double rq = 0.0;
    for (std::size_t v = 0; v < n; ++v) rq += x[v] * y[v];
    if (!normalize(y)) return est;
    x.swap(y);
    est.iterations = it;
    if (it > 1 && std::abs(rq - prev) <= tol * std::max(1.0, std::abs(rq))) {
      est.value = rq;
      est.converged = true;
      est.fallback = false;
      return est;
    }
    prev = rq;
  }
  return est;
}

std::string to_json(const WeightedGraph& g) {
  nlohmann::json j;
  j["n"] = g.n();
  auto& arr = j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges()) arr.push_back({e.i, e.j, e.w});
  return j.dump();
}

WeightedGraph graph_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw GraphError(std::string("graph json: ") + ex.what());
  }
  if (!j.contains("n") || !j.contains("edges")) throw GraphError("graph json: need 'n' and 'edges'");
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 3) throw GraphError("graph json: edge must be [i, j, w]");
    edges.push_back({e[0].get<NodeId>(), e[1].get<NodeId>(), e[2].get<double>()});
  }
  return WeightedGraph::from_edges(j.at("n").get<NodeId>(), std::move(edges));
}

void save_graph_json(const WeightedGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write " + path);
  out << to_json(g) << '\n';
}

WeightedGraph load_graph_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return graph_from_json(ss.str());
}

std::string to_dot(const WeightedGraph& g) {
  std::string out = "graph G {\n";
  for (NodeId v = 0; v < g.n(); ++v) out += "  " + std::to_string(v) + ";\n";
  char buf[32];
  for (const auto& e : g.edges()) {
    std::snprintf(buf, sizeof buf, "%.4f", e.w);
    out += "  " + std::to_string(e.i) + " -- " + std::to_string(e.j) + " [label=\"" + buf + "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace multihop
