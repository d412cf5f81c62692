#include "doctest.h"
#include "helpers.hpp"
#include "multihop/khop.hpp"

using namespace multihop;

namespace {

using testing::bitwise_equal;
using testing::enumerate_paths;
using testing::floyd_warshall;

WeightedGraph path3() { return WeightedGraph::from_edges(3, {{0, 1, 0.8}, {1, 2, 0.6}}); }

WeightedGraph diamond() {
  // a=0, b=1, c=2, d=3
  return WeightedGraph::from_edges(4, {{0, 1, 1.0}, {0, 2, 2.0}, {1, 3, 3.0}, {2, 3, 4.0}});
}

}  // namespace

TEST_SUITE("khop") {
  TEST_CASE("hop distances") {
    const auto d = hop_distances(path3(), 0);
    CHECK(d == std::vector<std::int32_t>{0, 1, 2});
    const auto e = hop_distances(WeightedGraph(3), 1);
    CHECK(e == std::vector<std::int32_t>{kUnreachable, 0, kUnreachable});
    CHECK_THROWS(hop_distances(WeightedGraph(3), 3));
    CHECK_THROWS(hop_distances(WeightedGraph(3), -1));
  }

  TEST_CASE("hop distances match Floyd-Warshall") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 50; ++t) {
      const auto g = testing::random_graph(10, 0.25, rng);
      const auto fw = floyd_warshall(g);
      for (NodeId s = 0; s < g.n(); ++s) {
        const auto d = hop_distances(g, s);
        for (NodeId v = 0; v < g.n(); ++v) {
          const int want = fw[s][v] >= (1 << 20) ? kUnreachable : fw[s][v];
          CHECK(d[v] == want);
        }
      }
    }
  }

  TEST_CASE("path example") {
    const auto e2 = build_khop(path3(), 2);
    REQUIRE(e2.num_edges() == 1);
    CHECK(e2.edges()[0].i == 0);
    CHECK(e2.edges()[0].j == 2);
    CHECK(e2.edges()[0].w == doctest::Approx(0.35).epsilon(1e-15));
  }

  TEST_CASE("diamond example") {
    const auto e2 = build_khop(diamond(), 2);
    CHECK(e2.num_edges() == 2);
    CHECK(e2.weight(0, 3) == doctest::Approx(1.5));
    CHECK(e2.weight(1, 2) == doctest::Approx(1.75));
  }

  TEST_CASE("triangle: exact distance empties the 2-hop graph") {
    const auto tri = WeightedGraph::from_edges(3, {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}});
    CHECK(build_khop(tri, 2).num_edges() == 0);
    KhopOptions incl;
    incl.exact_distance = false;
    const auto e2 = build_khop(tri, 2, incl);
    CHECK(e2.num_edges() == 3);
    CHECK(e2.weight(0, 1) == 0.5);
  }

  TEST_CASE("complete graph K4 with k=3 in inclusive mode") {
    std::vector<Edge> edges;
    for (NodeId i = 0; i < 4; ++i)
      for (NodeId j = i + 1; j < 4; ++j) edges.push_back({i, j, 1.0});
    const auto k4 = WeightedGraph::from_edges(4, edges);
    const auto e3 = khop_oracle(k4, 3, false);
    CHECK(e3.num_edges() == 6);
    for (const auto& e : e3.edges()) CHECK(e.w == 3.0 / 9.0);
    CHECK(bitwise_equal(build_khop(k4, 3, {false, 10'000'000, 1}), e3));
  }

  TEST_CASE("k=1 and invalid k") {
    std::mt19937_64 rng(22);
    const auto g = testing::random_graph(9, 0.4, rng);
    CHECK(build_khop(g, 1) == g);
    CHECK_THROWS(build_khop(g, 0));
    CHECK_THROWS(khop_oracle(g, 0));
    CHECK_THROWS(khop_oracle(WeightedGraph(kOracleMaxNodes + 1), 2));
    CHECK(khop_oracle(WeightedGraph(5), 3).num_edges() == 0);
  }

  TEST_CASE("independent enumeration agrees with oracle and builder") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 60; ++t) {
      const auto g = testing::random_graph(3 + t % 6, 0.45, rng);
      for (int k = 2; k <= 4; ++k) {
        for (bool exact : {true, false}) {
          const auto ref = enumerate_paths(g, k, exact);
          CHECK(bitwise_equal(khop_oracle(g, k, exact), ref));
          KhopOptions o;
          o.exact_distance = exact;
          CHECK(bitwise_equal(build_khop(g, k, o), ref));
        }
      }
    }
  }

  TEST_CASE("unit weights give 1/k on every edge") {
    std::mt19937_64 rng(24);
    auto g = testing::random_graph(10, 0.3, rng);
    std::vector<Edge> unit;
    for (auto e : g.edges()) unit.push_back({e.i, e.j, 1.0});
    g = WeightedGraph::from_edges(10, unit);
    for (int k = 2; k <= 4; ++k) {
      const auto hk = build_khop(g, k);
      CHECK(hk.num_edges() > 0);
      for (const auto& e : hk.edges()) CHECK(e.w == doctest::Approx(1.0 / k));
    }
  }

  TEST_CASE("threaded build equals serial build") {
    std::mt19937_64 rng(25);
    const auto g = testing::random_graph(60, 0.08, rng);
    KhopOptions one, four;
    one.threads = 1;
    four.threads = 4;
    for (int k = 2; k <= 3; ++k) CHECK(bitwise_equal(build_khop(g, k, one), build_khop(g, k, four)));
  }

  TEST_CASE("expansion budget is enforced") {
    std::vector<Edge> edges;
    for (NodeId i = 0; i < 12; ++i)
      for (NodeId j = i + 1; j < 12; ++j) edges.push_back({i, j, 1.0});
    const auto k12 = WeightedGraph::from_edges(12, edges);
    KhopOptions tight;
    tight.expansion_budget = 50;
    CHECK_THROWS(build_khop(k12, 4, tight));
  }

  TEST_CASE("hop sets") {
    const auto one = build_hop_set(path3(), 1);
    CHECK(one.max_hop() == 1);
    CHECK(one.hop(1) == path3());
    const auto two = build_hop_set(path3(), 2);
    CHECK(two.hop(2).num_edges() == 1);
    CHECK(two.hop(2).weight(0, 2) == doctest::Approx(0.35));
    CHECK_THROWS(build_hop_set(path3(), 0));

    std::mt19937_64 rng(26);
    const auto g = testing::random_graph(10, 0.3, rng);
    const auto set = build_hop_set(g, 3);
    for (int k = 1; k <= 3; ++k) CHECK(bitwise_equal(set.hop(k), k == 1 ? g : khop_oracle(g, k)));
  }
}
