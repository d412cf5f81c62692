#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "multihop/gradcheck.hpp"
#include "multihop/nn.hpp"

using namespace multihop;
using Mat = Matrix<double>;

namespace {

std::vector<Eigen::MatrixXd> chebyshev_basis(const Eigen::MatrixXd& l, int K) {
  std::vector<Eigen::MatrixXd> t{Eigen::MatrixXd::Identity(l.rows(), l.cols()), l};
  for (int k = 2; k <= K; ++k) t.push_back(2.0 * l * t[k - 1] - t[k - 2]);
  return t;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("first-order conv equals dense P h theta") {
    std::mt19937_64 rng(41);
    const auto g = testing::random_graph(9, 0.4, rng);
    const auto p = sym_renormalize(g).as<double>();
    const Mat h = testing::gaussian(9, 4, rng), th = testing::gaussian(4, 3, rng);
    const Eigen::MatrixXd want = testing::dense(p) * h * th;
    CHECK((gcn_layer_forward<double>(p, h, th) - want).cwiseAbs().maxCoeff() < 1e-13);
    const SparseMatrix<double> hs = h.sparseView();
    CHECK((gcn_layer_forward<double>(p, hs, th) - want).cwiseAbs().maxCoeff() < 1e-13);
    CHECK_THROWS_AS(gcn_layer_forward<double>(p, h, Mat(testing::gaussian(5, 3, rng))), ShapeError);
  }

  TEST_CASE("chebyshev conv equals the explicit polynomial expansion") {
    std::mt19937_64 rng(42);
    const auto g = testing::random_graph(8, 0.5, rng);
    const auto lap = scaled_laplacian(g, estimate_lambda_max(g).value).as<double>();
    const Mat h = testing::gaussian(8, 3, rng);
    for (int K = 1; K <= 4; ++K) {
      std::vector<Mat> th;
      for (int k = 0; k <= K; ++k) th.push_back(testing::gaussian(3, 2, rng));
      const auto basis = chebyshev_basis(testing::dense(lap), K);
      Eigen::MatrixXd want = Eigen::MatrixXd::Zero(8, 2);
      for (int k = 0; k <= K; ++k) want += basis[k] * h * th[k];
      const Mat got = cheb_layer_forward<double>(lap, h, std::span<const Mat>(th));
      CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
    std::vector<Mat> one{testing::gaussian(3, 2, rng)};
    CHECK_THROWS_AS(cheb_layer_forward<double>(lap, h, std::span<const Mat>(one)), ShapeError);
  }

  TEST_CASE("elu") {
    Mat x(1, 4);
    x << -2.0, -1e-9, 0.0, 3.0;
    const Mat y = elu<double>(x);
    CHECK(y(0, 0) == doctest::Approx(std::exp(-2.0) - 1.0));
    CHECK(y(0, 1) == doctest::Approx(-1e-9).epsilon(1e-6));
    CHECK(y(0, 2) == 0.0);
    CHECK(y(0, 3) == 3.0);
    const Mat g = elu_backward<double>(y, Mat::Ones(1, 4));
    CHECK(g(0, 0) == doctest::Approx(std::exp(-2.0)));
    CHECK(g(0, 3) == 1.0);
  }

  TEST_CASE("dropout") {
    Rng rng(43);
    const Mat h = Mat::Ones(200, 50);
    Mat mask;
    const Mat out = dropout<double>(h, 0.5, rng, true, &mask);
    const double kept = (out.array() != 0.0).cast<double>().mean();
    CHECK(kept == doctest::Approx(0.5).epsilon(0.05));
    CHECK(out.maxCoeff() == 2.0);
    CHECK(out == h.cwiseProduct(mask));
    CHECK(dropout<double>(h, 0.5, rng, false) == h);
    CHECK(dropout<double>(h, 0.0, rng, true) == h);
    CHECK_THROWS(dropout<double>(h, 1.0, rng, true));
    CHECK_THROWS(dropout<double>(h, -0.1, rng, true));

    // Sparse and dense dropout agree on the stored entries given the same stream.
    Mat d = Mat::Zero(30, 10);
    for (int i = 0; i < 30; ++i) d(i, i % 10) = 1.0 + i;
    const SparseMatrix<double> s = d.sparseView();
    Rng a(7), b(7);
    const Mat sd = Eigen::MatrixXd(dropout<double>(s, 0.3, a, true));
    KeepStream ks(b, 0.3);
    for (int i = 0; i < 30; ++i) CHECK(sd(i, i % 10) == doctest::Approx(ks.keep() ? d(i, i % 10) / 0.7 : 0.0).epsilon(1e-15));
  }

  TEST_CASE("masked softmax cross-entropy") {
    Mat logits(3, 3);
    logits << 1, 2, 3, 0, 0, 0, 5, 1, -1;
    const std::vector<int> labels{2, 0, 1};
    const std::vector<NodeId> mask{0, 1};
    const auto r = masked_softmax_xent<double>(logits, labels, mask);
    const double l0 = std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3.0;
    const double l1 = std::log(3.0);
    CHECK(r.loss == doctest::Approx((l0 + l1) / 2).epsilon(1e-14));
    CHECK(r.grad.row(2).isZero());
    CHECK(std::abs(r.grad.row(0).sum()) < 1e-15);
    CHECK(masked_accuracy<double>(logits, labels, mask) == 1.0);
    CHECK(masked_accuracy<double>(logits, labels, std::vector<NodeId>{2}) == 0.0);
    CHECK_THROWS(masked_softmax_xent<double>(logits, labels, std::vector<NodeId>{}));
    CHECK_THROWS(masked_softmax_xent<double>(logits, std::vector<int>{2, 7, 1}, mask));
  }

  TEST_CASE("l2 penalty and gradient") {
    Tensor2<double> a(Mat::Constant(2, 2, 0.5), true), b(Mat::Constant(1, 3, -1.0), true);
    std::vector<Tensor2<double>*> ps{&a, &b};
    CHECK(l2_penalty<double>(ps, 0.1) == doctest::Approx(0.1 * (4 * 0.25 + 3.0)));
    a.grad_buffer().setZero();
    b.grad_buffer().setZero();
    l2_backward<double>(ps, 0.1);
    CHECK((*a.grad).isApprox(Mat::Constant(2, 2, 0.1)));
    CHECK((*b.grad).isApprox(Mat::Constant(1, 3, -0.2)));
  }

  TEST_CASE("awc weights are a per-node softmax of tanh scores") {
    std::mt19937_64 rng(44);
    std::vector<Mat> br{testing::gaussian(6, 3, rng), testing::gaussian(6, 3, rng), testing::gaussian(6, 3, rng)};
    const Mat alpha = testing::gaussian(3, 1, rng);
    const auto r = awc_forward<double>(std::span<const Mat>(br), alpha);
    for (int v = 0; v < 6; ++v) {
      double z = 0;
      for (int j = 0; j < 3; ++j) z += std::exp(std::tanh(br[j].row(v).dot(alpha.col(0))));
      Eigen::RowVectorXd fused = Eigen::RowVectorXd::Zero(3);
      for (int j = 0; j < 3; ++j) {
        const double w = std::exp(std::tanh(br[j].row(v).dot(alpha.col(0)))) / z;
        CHECK(r.weights(v, j) == doctest::Approx(w).epsilon(1e-14));
        fused += w * br[j].row(v);
      }
      CHECK((r.fused.row(v) - fused).cwiseAbs().maxCoeff() < 1e-14);
      CHECK(r.weights.row(v).sum() == doctest::Approx(1.0).epsilon(1e-15));
    }
    std::vector<Mat> one{br[0]};
    const auto single = awc_forward<double>(std::span<const Mat>(one), alpha);
    CHECK(single.weights == Mat::Ones(6, 1));
    CHECK(single.fused == br[0]);
    CHECK_THROWS_AS(awc_forward<double>(std::span<const Mat>(br), Mat(testing::gaussian(2, 1, rng))), ShapeError);
  }

  TEST_CASE("sum and max fusion") {
    Mat a(1, 3), b(1, 3);
    a << 1, 5, 2;
    b << 3, 5, 1;
    std::vector<Mat> br{a, b};
    CHECK(sum_fusion<double>(std::span<const Mat>(br)) == a + b);
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg;
    const Mat m = max_fusion<double>(std::span<const Mat>(br), &arg);
    CHECK(m(0, 0) == 3);
    CHECK(m(0, 1) == 5);
    CHECK(arg(0, 0) == 1);
    CHECK(arg(0, 1) == 0);  // tie keeps the lower branch
    CHECK(arg(0, 2) == 0);
    std::vector<Mat> bad{a, Mat::Zero(2, 3)};
    CHECK_THROWS_AS(sum_fusion<double>(std::span<const Mat>(bad)), ShapeError);
  }

  TEST_CASE("adam matches a hand-computed update") {
    Tensor2<double> p(Mat::Constant(1, 1, 1.0), true);
    std::vector<Tensor2<double>*> ps{&p};
    Adam<double> opt(0.1);
    p.grad_buffer()(0, 0) = 0.5;
    opt.step(ps);
    const double p1 = p.value(0, 0);
    // m = 0.05, v = 0.00025; bias corrected m = 0.5, v = 0.25.
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    p.grad_buffer()(0, 0) = -1.0;
    opt.step(ps);
    const double m = 0.9 * 0.05 + 0.1 * -1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    CHECK(p.value(0, 0) == doctest::Approx(p1 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
    CHECK_THROWS(opt.set_lr(0.0));
    Tensor2<double> frozen(Mat::Constant(1, 1, 2.0));
    std::vector<Tensor2<double>*> fs{&frozen};
    Adam<double> other(0.1);
    other.step(fs);
    CHECK(frozen.value(0, 0) == 2.0);
  }

  TEST_CASE("glorot uniform range and determinism") {
    Rng a(5), b(5);
    const Mat x = glorot_uniform<double>(30, 20, a);
    CHECK(x == glorot_uniform<double>(30, 20, b));
    const double r = std::sqrt(6.0 / 50.0);
    CHECK(x.cwiseAbs().maxCoeff() <= r);
    CHECK(x.cwiseAbs().maxCoeff() > 0.9 * r);
  }

  TEST_CASE("finite-difference suite on a few instances") {
    const auto suite = run_gradcheck_suite(6, 99);
    CHECK(suite.cases.size() == 36);
    for (const auto& c : suite.cases) {
      INFO(c.name << " instance " << c.instance);
      CHECK(c.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("grad_check flags a wrong gradient") {
    Tensor2<double> x(Mat::Constant(1, 2, 0.3), true);
    std::vector<Tensor2<double>*> in{&x};
    const double err = grad_check(
        [&](bool grad) {
          if (grad) x.grad_buffer() += 3.0 * x.value;  // true gradient is 2x
          return x.value.squaredNorm();
        },
        std::span<Tensor2<double>* const>(in));
    CHECK(err > 0.3);
  }
}
