#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "multihop/graph.hpp"

using namespace multihop;
using testing::dense;
using testing::dense_adjacency;

namespace {

Eigen::MatrixXd renorm_oracle(const WeightedGraph& g) {
  const Eigen::MatrixXd at = dense_adjacency(g) + Eigen::MatrixXd::Identity(g.n(), g.n());
  const Eigen::VectorXd d = at.rowwise().sum().array().rsqrt();
  return d.asDiagonal() * at * d.asDiagonal();
}

Eigen::MatrixXd laplacian_oracle(const WeightedGraph& g) {
  const Eigen::MatrixXd a = dense_adjacency(g);
  const Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(g.n());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(g.n(), g.n());
  for (NodeId i = 0; i < g.n(); ++i) {
    if (deg[i] > 0) {
      inv[i] = 1.0 / std::sqrt(deg[i]);
      l(i, i) = 1.0;
    }
  }
  l -= inv.asDiagonal() * a * inv.asDiagonal();
  return l;
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("edges are canonicalized and indexed") {
    const auto g = WeightedGraph::from_edges(4, {{2, 0, 0.5}, {1, 3, 2.0}, {0, 1, 0.0}});
    CHECK(g.num_edges() == 2);
    CHECK(g.edges()[0] == Edge{0, 2, 0.5});
    CHECK(g.weight(2, 0) == 0.5);
    CHECK(g.weight(0, 1) == 0.0);
    CHECK(g.degree(0) == 1);
    CHECK(g.weighted_degree(3) == 2.0);
    CHECK(g.neighbors(1).size() == 1);
  }

  TEST_CASE("invalid edge lists are rejected") {
    CHECK_THROWS_AS(WeightedGraph::from_edges(3, {{1, 1, 1.0}}), GraphError);
    CHECK_THROWS_AS(WeightedGraph::from_edges(3, {{0, 1, -1.0}}), GraphError);
    CHECK_THROWS_AS(WeightedGraph::from_edges(3, {{0, 3, 1.0}}), GraphError);
    CHECK_THROWS_AS(WeightedGraph::from_edges(3, {{0, 1, 1.0}, {1, 0, 1.0}}), GraphError);
    CHECK_THROWS_AS(WeightedGraph::from_edges(3, {{0, 1, NAN}}), GraphError);
  }

  TEST_CASE("renormalization of a single edge") {
    const auto p = sym_renormalize(WeightedGraph::from_edges(2, {{0, 1, 1.0}}));
    CHECK(p.kind == PropagationKind::renormalized);
    const Eigen::MatrixXd d = dense(p.entries);
    CHECK(d.isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5)));
  }

  TEST_CASE("renormalization of an edgeless graph is the identity") {
    const auto p = sym_renormalize(WeightedGraph(3));
    CHECK(dense(p.entries) == Eigen::MatrixXd::Identity(3, 3));
  }

  TEST_CASE("renormalization matches the dense oracle") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 100; ++t) {
      const auto g = testing::random_graph(2 + t % 7, 0.5, rng);
      const Eigen::MatrixXd got = dense(sym_renormalize(g).entries);
      CHECK((got - renorm_oracle(g)).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((got - got.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(got.minCoeff() >= 0.0);
      CHECK(got.maxCoeff() <= 1.0);
    }
  }

  TEST_CASE("regular uniform graphs have unit row sums after renormalization") {
    std::vector<Edge> ring;
    for (NodeId i = 0; i < 6; ++i) ring.push_back({i, static_cast<NodeId>((i + 1) % 6), 0.7});
    const Eigen::MatrixXd p = dense(sym_renormalize(WeightedGraph::from_edges(6, ring)).entries);
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
  }

  TEST_CASE("scaled laplacian examples") {
    const auto l = scaled_laplacian(WeightedGraph::from_edges(2, {{0, 1, 1.0}}), 2.0);
    Eigen::MatrixXd want(2, 2);
    want << 0, -1, -1, 0;
    CHECK((dense(l.entries) - want).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(dense(scaled_laplacian(WeightedGraph(3), 2.0).entries) == -Eigen::MatrixXd::Identity(3, 3));
    CHECK_THROWS(scaled_laplacian(WeightedGraph(3), 0.0));
    CHECK_THROWS(scaled_laplacian(WeightedGraph(3), -1.0));
  }

  TEST_CASE("scaled laplacian matches the dense oracle and has spectrum in [-1, 1]") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 100; ++t) {
      const auto g = testing::random_graph(2 + t % 7, 0.5, rng);
      const Eigen::MatrixXd l = laplacian_oracle(g);
      const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(l).eigenvalues().maxCoeff();
      const double use = lmax > 0 ? lmax : 2.0;
      const Eigen::MatrixXd want = (2.0 / use) * l - Eigen::MatrixXd::Identity(g.n(), g.n());
      const Eigen::MatrixXd got = dense(scaled_laplacian(g, use).entries);
      CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
      const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(got).eigenvalues();
      CHECK(ev.minCoeff() >= -1.0 - 1e-9);
      CHECK(ev.maxCoeff() <= 1.0 + 1e-9);
    }
  }

  TEST_CASE("lambda_max estimates") {
    const auto e2 = estimate_lambda_max(WeightedGraph::from_edges(2, {{0, 1, 1.0}}));
    CHECK(e2.value == doctest::Approx(2.0).epsilon(1e-6));
    const auto none = estimate_lambda_max(WeightedGraph(4));
    CHECK(none.value == 2.0);
    CHECK(none.fallback);

    // Path 0-1-2 is bipartite, so the normalized Laplacian tops out at 2.
    const auto path = WeightedGraph::from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    const double dense_max =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(laplacian_oracle(path)).eigenvalues().maxCoeff();
    CHECK(dense_max == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(estimate_lambda_max(path).value == doctest::Approx(dense_max).epsilon(1e-3));

    std::mt19937_64 rng(13);
    for (int t = 0; t < 30; ++t) {
      const auto g = testing::random_graph(8, 0.5, rng);
      if (g.num_edges() == 0) continue;
      const double want =
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(laplacian_oracle(g)).eigenvalues().maxCoeff();
      const auto est = estimate_lambda_max(g, 1000, 1e-10);
      if (est.converged) CHECK(est.value == doctest::Approx(want).epsilon(1e-3));
    }
  }

  TEST_CASE("json round trip and dot export") {
    std::mt19937_64 rng(14);
    const auto g = testing::random_graph(9, 0.4, rng);
    CHECK(graph_from_json(to_json(g)) == g);
    const auto path = (std::filesystem::temp_directory_path() / "multihop_graph_rt.json").string();
    save_graph_json(g, path);
    CHECK(load_graph_json(path) == g);
    std::filesystem::remove(path);

    const auto small = WeightedGraph::from_edges(2, {{0, 1, 0.123456}});
    const auto dot = to_dot(small);
    CHECK(dot.find("0 -- 1") != std::string::npos);
    CHECK(dot.find("0.1235") != std::string::npos);
    CHECK_THROWS(graph_from_json(R"({"n": 2, "edges": [[0, 0, 1.0]]})"));
  }
}
