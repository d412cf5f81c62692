#include "multihop/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "multihop/csv.hpp"

namespace multihop {

void MetaTable::validate() const {
  if (n < 1) throw GraphError("meta table needs at least one node");
  for (const auto& m : measures) {
    if (m.values.size() != static_cast<std::size_t>(n)) {
      throw GraphError("measure '" + m.name + "' has " + std::to_string(m.values.size()) +
                       " values, expected " + std::to_string(n));
    }
    if (!(m.beta >= 0.0)) throw GraphError("measure '" + m.name + "' has negative beta");
  }
}

WeightedGraph meta_adjacency(const MetaTable& meta) {
  meta.validate();
  std::vector<Edge> edges;
  for (NodeId i = 0; i < meta.n; ++i) {
    for (NodeId j = i + 1; j < meta.n; ++j) {
      int count = 0;
      for (const auto& m : meta.measures) {
        if (std::abs(m.values[i] - m.values[j]) <= m.beta) ++count;
      }
      if (count > 0) edges.push_back({i, j, static_cast<double>(count)});
    }
  }
  return WeightedGraph::from_edges(meta.n, std::move(edges));
}

double l1_distance(const FeatureMatrix& f, NodeId a, NodeId b) {
  FeatureMatrix::InnerIterator ia(f, a), ib(f, b);
  double d = 0.0;
  while (ia || ib) {
    if (ib && (!ia || ib.index() < ia.index())) {
      d += std::abs(ib.value());
      ++ib;
    } else if (ia && (!ib || ia.index() < ib.index())) {
      d += std::abs(ia.value());
      ++ia;
    } else {
      d += std::abs(ia.value() - ib.value());
      ++ia;
      ++ib;
    }
  }
  return d;
}

namespace {

struct RowStats {
  double mean = 0.0;
  double norm = 0.0;  // sqrt(sum of squared deviations)
};

RowStats row_stats(const FeatureMatrix& f, NodeId v) {
  const auto dim = static_cast<double>(f.cols());
  double sum = 0.0;
  Eigen::Index nnz = 0;
  for (FeatureMatrix::InnerIterator it(f, v); it; ++it) {
    sum += it.value();
    ++nnz;
  }
  RowStats s;
  s.mean = sum / dim;
  double ss = static_cast<double>(f.cols() - nnz) * s.mean * s.mean;
  for (FeatureMatrix::InnerIterator it(f, v); it; ++it) {
    const double d = it.value() - s.mean;
    ss += d * d;
  }
  s.norm = std::sqrt(ss);
  return s;
}

double sparse_dot(const FeatureMatrix& f, NodeId a, NodeId b) {
  FeatureMatrix::InnerIterator ia(f, a), ib(f, b);
  double dot = 0.0;
  while (ia && ib) {
    if (ia.index() < ib.index()) {
      ++ia;
    } else if (ib.index() < ia.index()) {
      ++ib;
    } else {
      dot += ia.value() * ib.value();
      ++ia;
      ++ib;
    }
  }
  return dot;
}

double correlation_from_stats(const FeatureMatrix& f, NodeId a, NodeId b, const RowStats& sa,
                              const RowStats& sb) {
  if (sa.norm == 0.0) throw GraphError("node " + std::to_string(a) + " has a constant feature row");
  if (sb.norm == 0.0) throw GraphError("node " + std::to_string(b) + " has a constant feature row");
  const double cov = sparse_dot(f, a, b) - static_cast<double>(f.cols()) * sa.mean * sb.mean;
  const double r = std::clamp(cov / (sa.norm * sb.norm), -1.0, 1.0);
  return 1.0 - r;
}

}  // namespace

double correlation_distance(const FeatureMatrix& f, NodeId a, NodeId b) {
  return correlation_from_stats(f, a, b, row_stats(f, a), row_stats(f, b));
}

EdgeWeights feature_edge_weights(const FeatureMatrix& features, const WeightedGraph& pairs,
                                 const AffinityConfig& cfg) {
  if (features.rows() != pairs.n()) {
    throw GraphError("feature rows (" + std::to_string(features.rows()) +
                     ") do not match node count (" + std::to_string(pairs.n()) + ")");
  }
  if (cfg.sigma && !(*cfg.sigma > 0.0)) throw GraphError("sigma must be positive");

  const auto& edges = pairs.edges();
  std::vector<double> rho(edges.size());
  if (cfg.distance == DistanceKind::l1) {
    for (std::size_t k = 0; k < edges.size(); ++k) rho[k] = l1_distance(features, edges[k].i, edges[k].j);
  } else {
    std::vector<RowStats> stats(static_cast<std::size_t>(pairs.n()));
    std::vector<char> ready(stats.size(), 0);
    auto get = [&](NodeId v) -> const RowStats& {
      if (!ready[v]) {
        stats[v] = row_stats(features, v);
        ready[v] = 1;
      }
      return stats[v];
    };
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto [i, j, w] = edges[k];
      rho[k] = correlation_from_stats(features, i, j, get(i), get(j));
    }
  }

  double sigma = 0.0;
  if (cfg.sigma) {
    sigma = *cfg.sigma;
  } else if (!rho.empty()) {
    for (double r : rho) sigma += r;
    sigma /= static_cast<double>(rho.size());
  }

  std::vector<Edge> out;
  out.reserve(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    double w = 1.0;
    if (rho[k] != 0.0) {
      w = std::exp(-(rho[k] * rho[k]) / (2.0 * sigma * sigma));
      // Keep the pair in the support even if the kernel underflows.
      w = std::max(w, std::numeric_limits<double>::min());
    }
    out.push_back({edges[k].i, edges[k].j, w});
  }
  return {WeightedGraph::from_edges(pairs.n(), std::move(out)), sigma};
}

WeightedGraph build_affinity(const WeightedGraph& adjacency, const WeightedGraph& weights) {
  if (adjacency.n() != weights.n()) {
    throw GraphError("node count mismatch: " + std::to_string(adjacency.n()) + " vs " +
                     std::to_string(weights.n()));
  }
  std::vector<Edge> out;
  out.reserve(adjacency.num_edges());
  for (const auto& e : adjacency.edges()) {
    const double w = weights.weight(e.i, e.j);
    if (w == 0.0) {
      throw GraphError("no weight for adjacency edge (" + std::to_string(e.i) + ", " +
                       std::to_string(e.j) + ")");
    }
    out.push_back({e.i, e.j, e.w * w});
  }
  return WeightedGraph::from_edges(adjacency.n(), std::move(out));
}

std::string to_string(DistanceKind kind) { return kind == DistanceKind::l1 ? "l1" : "correlation"; }

DistanceKind distance_from_string(const std::string& s) {
  if (s == "l1") return DistanceKind::l1;
  if (s == "correlation") return DistanceKind::correlation;
  throw GraphError("unknown distance '" + s + "' (expected l1 or correlation)");
}

MetaTable load_meta_table(const std::string& csv_path, const std::string& betas_path) {
  std::vector<std::size_t> lines;
  const auto rows = read_csv(csv_path, ',', &lines);
  if (rows.empty() || rows.front().empty() || rows.front()[0] != "node_id") {
    throw GraphError(csv_path + ":1: expected header starting with node_id");
  }
  const auto& header = rows.front();
  const std::size_t cols = header.size();
  const auto n = static_cast<NodeId>(rows.size() - 1);

  std::vector<std::vector<std::string>> cells(cols - 1, std::vector<std::string>(rows.size() - 1));
  std::vector<char> seen(rows.size() - 1, 0);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto where = csv_path + ":" + std::to_string(lines[r]);
    if (rows[r].size() != cols) throw GraphError(where + ": expected " + std::to_string(cols) + " fields");
    const long id = parse_int(rows[r][0], where);
    if (id < 0 || id >= n) throw GraphError(where + ": node_id out of range");
    if (seen[id]) throw GraphError(where + ": duplicate node_id " + rows[r][0]);
    seen[id] = 1;
    for (std::size_t c = 1; c < cols; ++c) cells[c - 1][id] = rows[r][c];
  }

  std::ifstream bin(betas_path);
  if (!bin) throw GraphError("cannot read " + betas_path);
  nlohmann::json betas;
  try {
    bin >> betas;
  } catch (const nlohmann::json::exception& ex) {
    throw GraphError(betas_path + ": " + ex.what());
  }

  MetaTable meta;
  meta.n = n;
  for (std::size_t c = 1; c < cols; ++c) {
    MetaMeasure m;
    m.name = header[c];
    if (!betas.contains(m.name)) throw GraphError(betas_path + ": no beta for measure '" + m.name + "'");
    m.beta = betas.at(m.name).get<double>();
    auto& col = cells[c - 1];
    bool numeric = true;
    for (const auto& s : col) numeric = numeric && try_parse_double(s).has_value();
    if (numeric) {
      for (const auto& s : col) m.values.push_back(*try_parse_double(s));
    } else {
      // Categorical column: integer codes in sorted label order.
      std::set<std::string> labels(col.begin(), col.end());
      std::map<std::string, double> code;
      for (const auto& s : labels) code.emplace(s, static_cast<double>(code.size()));
      for (const auto& s : col) m.values.push_back(code.at(s));
    }
    meta.measures.push_back(std::move(m));
  }
  meta.validate();
  return meta;
}

void save_meta_table(const MetaTable& meta, const std::string& csv_path,
                     const std::string& betas_path) {
  meta.validate();
  std::ofstream out(csv_path);
  if (!out) throw GraphError("cannot write " + csv_path);
  out << "node_id";
  for (const auto& m : meta.measures) out << ',' << m.name;
  out << '\n';
  out.precision(17);
  for (NodeId v = 0; v < meta.n; ++v) {
    out << v;
    for (const auto& m : meta.measures) out << ',' << m.values[v];
    out << '\n';
  }
  nlohmann::json betas = nlohmann::json::object();
  for (const auto& m : meta.measures) betas[m.name] = m.beta;
  std::ofstream bout(betas_path);
  if (!bout) throw GraphError("cannot write " + betas_path);
  bout << betas.dump(2) << '\n';
}

}  // namespace multihop
