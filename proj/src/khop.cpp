#include "multihop/khop.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "multihop/parallel.hpp"

namespace multihop {

std::vector<std::int32_t> hop_distances(const WeightedGraph& g, NodeId source) {
  if (source < 0 || source >= g.n()) {
    throw GraphError("source " + std::to_string(source) + " out of range for n=" +
                     std::to_string(g.n()));
  }
  std::vector<std::int32_t> dist(static_cast<std::size_t>(g.n()), kUnreachable);
  std::deque<NodeId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId u : g.neighbors(v)) {
      if (dist[u] == kUnreachable) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

namespace {

// Per-thread scratch for the source-by-source search.
class KhopSearcher {
 public:
  KhopSearcher(const WeightedGraph& g, int k, const KhopOptions& opts)
      : g_(g), k_(k), opts_(opts), denom_(static_cast<double>(k) * static_cast<double>(k)) {
    const auto n = static_cast<std::size_t>(g.n());
    on_path_.assign(n, 0);
    near_stamp_.assign(n, 0);
    best_.assign(n, 0.0);
  }

  void run(NodeId source, std::vector<Edge>& out) {
    ++stamp_;
    if (opts_.exact_distance) mark_closer_than_k(source);

    touched_.clear();
    expansions_ = 0;
    struct Frame {
      NodeId node;
      std::size_t next;
      double sum;
    };
    std::vector<Frame> stack;
    stack.reserve(static_cast<std::size_t>(k_) + 1);
    stack.push_back({source, 0, 0.0});
    on_path_[source] = 1;

    while (!stack.empty()) {
      Frame& top = stack.back();
      auto nb = g_.neighbors(top.node);
      if (top.next == nb.size()) {
        on_path_[top.node] = 0;
        stack.pop_back();
        continue;
      }
      const std::size_t idx = top.next++;
      const NodeId u = nb[idx];
      if (on_path_[u]) continue;
      const double sum = top.sum + g_.neighbor_weights(top.node)[idx];
      const auto depth = static_cast<int>(stack.size());  // edges on path incl. (top, u)
      if (++expansions_ > opts_.expansion_budget) {
        throw GraphError("k-hop search from node " + std::to_string(source) +
                         " exceeded the expansion budget of " +
                         std::to_string(opts_.expansion_budget));
      }
      if (depth == k_) {
        // Each unordered pair is scored from its lower endpoint only.
        if (u > source && !(opts_.exact_distance && near_stamp_[u] == stamp_)) {
          const double w = sum / denom_;
          if (w > best_[u]) {
            if (best_[u] == 0.0) touched_.push_back(u);
            best_[u] = w;
          }
        }
        continue;
      }
      on_path_[u] = 1;
      stack.push_back({u, 0, sum});
    }

    std::sort(touched_.begin(), touched_.end());
    for (NodeId u : touched_) {
      out.push_back({source, u, best_[u]});
      best_[u] = 0.0;
    }
  }

 private:
  // Stamps every node within k-1 hops of source (including source).
  void mark_closer_than_k(NodeId source) {
    frontier_.assign(1, source);
    near_stamp_[source] = stamp_;
    for (int d = 1; d < k_ && !frontier_.empty(); ++d) {
      next_.clear();
      for (NodeId v : frontier_) {
        for (NodeId u : g_.neighbors(v)) {
          if (near_stamp_[u] != stamp_) {
            near_stamp_[u] = stamp_;
            next_.push_back(u);
          }
        }
      }
      frontier_.swap(next_);
    }
  }

  const WeightedGraph& g_;
  int k_;
  KhopOptions opts_;
  double denom_;
  std::vector<char> on_path_;
  std::vector<std::uint32_t> near_stamp_;
  std::uint32_t stamp_ = 0;
  std::vector<double> best_;
  std::vector<NodeId> touched_;
  std::vector<NodeId> frontier_, next_;
  std::uint64_t expansions_ = 0;
};

}  // namespace

WeightedGraph build_khop(const WeightedGraph& g, int k, const KhopOptions& opts) {
  if (k < 1) throw GraphError("k must be >= 1, got " + std::to_string(k));
  if (k == 1) return g;

  const NodeId n = g.n();
  const int workers = std::max(1, std::min<int>(resolve_threads(opts.threads), n));
  std::vector<std::vector<Edge>> parts(static_cast<std::size_t>(workers));
  std::atomic<NodeId> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&](int w) {
    try {
      KhopSearcher searcher(g, k, opts);
      for (NodeId v = next++; v < n; v = next++) searcher.run(v, parts[w]);
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Edge> edges;
  for (auto& p : parts) edges.insert(edges.end(), p.begin(), p.end());
  return WeightedGraph::from_edges(n, std::move(edges));
}

WeightedGraph khop_oracle(const WeightedGraph& g, int k, bool exact_distance) {
  if (k < 1) throw GraphError("k must be >= 1, got " + std::to_string(k));
  const NodeId n = g.n();
  if (n > kOracleMaxNodes) {
    throw GraphError("khop_oracle supports at most " + std::to_string(kOracleMaxNodes) +
                     " nodes, got " + std::to_string(n));
  }
  const auto N = static_cast<std::size_t>(n);

  // Floyd-Warshall over unit edge lengths.
  constexpr int inf = 1 << 20;
  std::vector<int> hops(N * N, inf);
  for (std::size_t i = 0; i < N; ++i) hops[i * N + i] = 0;
  for (const auto& e : g.edges()) {
    hops[e.i * N + e.j] = 1;
    hops[e.j * N + e.i] = 1;
  }
  for (std::size_t m = 0; m < N; ++m)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        hops[i * N + j] = std::min(hops[i * N + j], hops[i * N + m] + hops[m * N + j]);

  std::vector<double> best(N * N, 0.0);
  std::vector<NodeId> seq(static_cast<std::size_t>(k) + 1);
  const double denom = static_cast<double>(k) * static_cast<double>(k);

  auto score = [&]() {
    for (std::size_t a = 0; a < seq.size(); ++a)
      for (std::size_t b = a + 1; b < seq.size(); ++b)
        if (seq[a] == seq[b]) return;
    for (std::size_t a = 0; a + 1 < seq.size(); ++a)
      if (g.weight(seq[a], seq[a + 1]) == 0.0) return;
    const NodeId first = seq.front(), last = seq.back();
    if (exact_distance && hops[first * N + last] != k) return;
    double sum = 0.0;
    if (first < last) {
      for (std::size_t a = 0; a + 1 < seq.size(); ++a) sum += g.weight(seq[a], seq[a + 1]);
    } else {
      for (std::size_t a = seq.size() - 1; a > 0; --a) sum += g.weight(seq[a], seq[a - 1]);
    }
    const double w = sum / denom;
    double& slot = best[first * N + last];
    if (w > slot) slot = w;
  };

  auto recurse = [&](auto& self, std::size_t pos) -> void {
    if (pos == seq.size()) {
      score();
      return;
    }
    for (NodeId v = 0; v < n; ++v) {
      seq[pos] = v;
      self(self, pos + 1);
    }
  };
  recurse(recurse, 0);

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      if (best[i * N + j] != best[j * N + i]) {
        throw GraphError("khop_oracle: asymmetric result at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
      }
      if (best[i * N + j] > 0.0) {
        edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j), best[i * N + j]});
      }
    }
  }
  return WeightedGraph::from_edges(n, std::move(edges));
}

HopGraphSet build_hop_set(const WeightedGraph& g, int max_hop, const KhopOptions& opts) {
  if (max_hop < 1) throw GraphError("max_hop must be >= 1, got " + std::to_string(max_hop));
  HopGraphSet set;
  set.base = g;
  set.exact_distance = opts.exact_distance;
  set.hops.reserve(static_cast<std::size_t>(max_hop));
  for (int k = 1; k <= max_hop; ++k) set.hops.push_back(build_khop(g, k, opts));
  return set;
}

}  // namespace multihop
