#include "multihop/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <stdexcept>

#include "multihop/khop.hpp"
#include "multihop/model.hpp"

namespace multihop {

double GradcheckSuite::worst() const {
  double w = 0.0;
  for (const auto& c : cases) w = std::max(w, c.max_rel_error);
  return w;
}

namespace {

using Mat = Matrix<double>;
using T2 = Tensor2<double>;

Mat gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

WeightedGraph random_graph(NodeId n, double p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (u(rng) < p) edges.push_back({i, j, 1.0 - u(rng)});
  return WeightedGraph::from_edges(n, std::move(edges));
}

}  // namespace

GradcheckSuite run_gradcheck_suite(int instances, std::uint64_t seed, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  auto check = [eps](const std::function<double(bool)>& f, std::vector<T2*> inputs) {
    return grad_check(f, std::span<T2* const>(inputs), eps);
  };
  GradcheckSuite suite;
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(seed + static_cast<std::uint64_t>(inst));
    std::uniform_int_distribution<int> size(6, 12);
    const NodeId n = size(rng);
    const int fin = 2 + inst % 4, fout = 2 + inst % 3;
    const auto g = random_graph(n, 0.35, rng);
    const auto prop = sym_renormalize(g).as<double>();
    const auto lap = scaled_laplacian(g, estimate_lambda_max(g).value).as<double>();
    const Mat probe = gaussian(n, fout, rng);

    {
      T2 h(gaussian(n, fin, rng), true), th(gaussian(fin, fout, rng), true);
      const double e = check(
          [&](bool grad) {
            const Mat out = gcn_layer_forward<double>(prop, h.value, th.value);
            if (grad) gcn_layer_backward<double>(prop, h.value, th.value, probe, th.grad_buffer(), &h.grad_buffer());
            return out.cwiseProduct(probe).sum();
          },
          {&h, &th});
      suite.cases.push_back({"first-order conv", "conv", inst, e});
    }
    {
      T2 h(gaussian(n, fin, rng), true);
      std::vector<T2> th;
      for (int k = 0; k <= 3; ++k) th.emplace_back(gaussian(fin, fout, rng), true);
      std::vector<T2*> inputs{&h};
      for (auto& t : th) inputs.push_back(&t);
      const double e = check(
          [&](bool grad) {
            std::vector<Mat> vals;
            for (auto& t : th) vals.push_back(t.value);
            const Mat out = cheb_layer_forward<double>(lap, h.value, std::span<const Mat>(vals));
            if (grad) {
              std::vector<Mat> gs;
              for (auto& t : th) gs.push_back(t.grad_buffer());
              cheb_layer_backward<double>(lap, h.value, std::span<const Mat>(vals), probe,
                                          std::span<Mat>(gs), &h.grad_buffer());
              for (std::size_t k = 0; k < th.size(); ++k) th[k].grad = gs[k];
            }
            return out.cwiseProduct(probe).sum();
          },
          inputs);
      suite.cases.push_back({"chebyshev conv K=3", "chebyshev", inst, e});
    }
    {
      const int k = 2 + inst % 3;
      std::vector<T2> br;
      for (int j = 0; j < k; ++j) br.emplace_back(gaussian(n, fout, rng), true);
      T2 alpha(gaussian(fout, 1, rng), true);
      std::vector<T2*> inputs{&alpha};
      for (auto& b : br) inputs.push_back(&b);
      const double e = check(
          [&](bool grad) {
            std::vector<Mat> vals;
            for (auto& b : br) vals.push_back(b.value);
            const auto fwd = awc_forward<double>(std::span<const Mat>(vals), alpha.value);
            if (grad) {
              std::vector<Mat> gs;
              for (auto& b : br) gs.push_back(b.grad_buffer());
              awc_backward<double>(std::span<const Mat>(vals), alpha.value, fwd, probe, std::span<Mat>(gs),
                                   alpha.grad_buffer());
              for (std::size_t j = 0; j < br.size(); ++j) br[j].grad = gs[j];
            }
            return fwd.fused.cwiseProduct(probe).sum();
          },
          inputs);
      suite.cases.push_back({"awc", "awc", inst, e});
    }
    {
      Mat x = gaussian(n, fout, rng);
      // Keep inputs away from the kink at zero.
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::abs(x.data()[i]) < 0.05) x.data()[i] += 0.1;
      T2 xt(x, true);
      const double e = check(
          [&](bool grad) {
            const Mat y = elu<double>(xt.value);
            if (grad) xt.grad_buffer() += elu_backward<double>(y, probe);
            return y.cwiseProduct(probe).sum();
          },
          {&xt});
      suite.cases.push_back({"elu", "elu", inst, e});
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> cls(0, fout - 1);
    for (auto& y : labels) y = cls(rng);
    std::vector<NodeId> mask;
    for (NodeId v = 0; v < n; ++v)
      if (v % 2 == 0 || v + 1 == n) mask.push_back(v);
    {
      T2 logits(gaussian(n, fout, rng), true);
      const double e = check(
          [&](bool grad) {
            auto r = masked_softmax_xent<double>(logits.value, labels, mask);
            if (grad) logits.grad_buffer() += r.grad;
            return r.loss;
          },
          {&logits});
      suite.cases.push_back({"softmax cross-entropy", "loss", inst, e});
    }
    {
      ModelConfig cfg;
      cfg.branches = 1 + inst % 3;
      cfg.conv = inst % 2 ? ConvKind::chebyshev : ConvKind::first_order;
      cfg.cheb_order = 3;
      cfg.layer_widths = {4, fout};
      cfg.fusion = std::array{Fusion::awc, Fusion::sum, Fusion::max}[(inst / 2) % 3];
      cfg.dropout_rate = 0.3;
      cfg.l2_weight = 5e-3;
      const auto hops = build_hop_set(g, cfg.branches);
      auto model = MultiHopModel<double>::build(cfg, hops, fin, rng);
      const SparseMatrix<double> x = gaussian(n, fin, rng).sparseView();
      const std::uint64_t dropout_seed = rng();
      auto params = model.parameters();
      const double e = check(
          [&](bool) {
            Rng replay(dropout_seed);
            return model.loss_and_grads(x, labels, mask, replay).total;
          },
          params);
      suite.cases.push_back({"model " + to_string(cfg.conv) + "/" + to_string(cfg.fusion) + "/" +
                                 std::to_string(cfg.branches) + " branch",
                             "model", inst, e});
    }
  }
  return suite;
}

}  // namespace multihop
