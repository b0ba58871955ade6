#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "../common/oracles.hpp"
#include "gridstab/error.hpp"

using namespace gs_oracle;

namespace {

constexpr double kTol = 1e-4;

// Circulant k-regular graph (k even): i ~ i +- 1 .. k/2.
Matrix circulant(int n, int k) {
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int s = 1; s <= k / 2; ++s) a(i, (i + s) % n) = a((i + s) % n, i) = 1.0;
  return a;
}

Matrix hypercube(int dim) {
  const int n = 1 << dim;
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < dim; ++b) a(i, i ^ (1 << b)) = 1.0;
  return a;
}

}  // namespace

TEST_CASE("dense layer and relu") {
  Tensor w({2, 1});
  w.data = {1.0, -2.0};
  Tensor b({1});
  b.data = {0.5};
  Matrix x(2, 2);
  x << 1, 1, 3, 0;
  const Matrix y = nn::dense_forward(x, w, b);
  CHECK(y(0, 0) == -0.5);
  CHECK(y(1, 0) == 3.5);
  const Matrix r = nn::relu(y);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(1, 0) == 3.5);

  Rng rng(1);
  Matrix big(20, 7);
  for (auto i = 0; i < big.size(); ++i) big.data()[i] = rng.uniform(-3, 3);
  CHECK((nn::relu(big).array() >= 0.0).all());

  for (std::uint64_t s = 0; s < 10; ++s) CHECK(check_dense(100 + s).max_rel_error < kTol);
}

TEST_CASE("convolution with max pooling") {
  Tensor in({1, 2, 2});
  in.data = {1, 2, 3, 4};
  Tensor k({1, 1, 2, 2}, 1.0);
  Tensor b({1});
  const Tensor out = nn::conv_maxpool_forward(in, k, b, {});
  REQUIRE(out.size() == 1);
  CHECK(out.data[0] == 10.0);

  Tensor wide({1, 3, 1});
  CHECK_THROWS_AS(nn::conv_maxpool_forward(wide, Tensor({1, 2, 2, 2}), b, {}), Error);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = check_conv_pool(200 + s);
    CAPTURE(r.worst_param);
    CHECK(r.max_rel_error < kTol);
  }
}

TEST_CASE("adjacency normalization examples") {
  Matrix two(2, 2);
  two << 0, 1, 1, 0;
  const Matrix n2 = nn::normalize_adjacency(two);
  CHECK(n2.isApprox(Matrix::Constant(2, 2, 0.5), 1e-15));

  const Matrix k3 = Matrix::Ones(3, 3) - Matrix::Identity(3, 3);
  CHECK(nn::normalize_adjacency(k3).isApprox(Matrix::Constant(3, 3, 1.0 / 3.0), 1e-15));

  Matrix bad(2, 2);
  bad << 0, 1, 0, 0;
  CHECK_THROWS_AS(nn::normalize_adjacency(bad), Error);
  CHECK_THROWS_AS(nn::normalize_adjacency(Matrix::Identity(2, 2)), Error);

  // padding rows and columns stay zero
  const std::vector<std::uint8_t> mask{1, 1, 0};
  const Matrix m = nn::normalize_adjacency(k3, mask);
  CHECK(m.row(2).isZero());
  CHECK(m.col(2).isZero());
  CHECK(m.topLeftCorner(2, 2).isApprox(Matrix::Constant(2, 2, 0.5), 1e-15));
}

TEST_CASE("normalized adjacency: symmetry, spectrum, regular rows") {
  Rng rng(41);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng.below(30));
    const Matrix a = random_adjacency(rng, n, rng.uniform(0.05, 0.6));
    const Matrix m = nn::normalize_adjacency(a);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd dm = m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dm);
    CHECK(es.eigenvalues().minCoeff() >= -1.0 - 1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-9);

    // sparse builder agrees with the dense one
    std::vector<std::uint8_t> mask(n, 1);
    CHECK((nn::normalized_propagation(n, edge_list(a), mask).dense() - m).cwiseAbs().maxCoeff() < 1e-15);
  }
  std::vector<Matrix> regular{circulant(10, 2), circulant(12, 4), circulant(9, 6), hypercube(3), hypercube(4),
                              Matrix::Ones(6, 6) - Matrix::Identity(6, 6)};
  for (const auto& a : regular) {
    const Matrix m = nn::normalize_adjacency(a);
    for (int i = 0; i < m.rows(); ++i) CHECK(std::abs(m.row(i).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("graph convolution") {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const auto op = nn::SparseOperator::from_dense(nn::normalize_adjacency(a));
  Matrix h(2, 1);
  h << 1, 1;
  Tensor w({1, 1});
  w.data = {2.0};
  const Matrix out = nn::gcn_forward(op, h, w, true);
  CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(out(1, 0) == doctest::Approx(2.0).epsilon(1e-15));

  nn::SparseOperator blocks = op;
  blocks.append_block(op);
  CHECK(blocks.n == 4);
  CHECK(blocks.dense().bottomRightCorner(2, 2) == op.dense());
  CHECK(blocks.dense().topRightCorner(2, 2).isZero());

  for (std::uint64_t s = 0; s < 10; ++s) CHECK(check_gcn(300 + s).max_rel_error < kTol);
}

TEST_CASE("embedding lookup") {
  Tensor table({3, 2});
  table.data = {1, 2, 3, 4, 5, 6};
  const std::vector<int> ids{2, 0};
  const Matrix e = nn::embedding_forward(table, ids);
  CHECK(e(0, 0) == 5.0);
  CHECK(e(1, 1) == 2.0);
  CHECK_THROWS_AS(nn::embedding_forward(table, std::vector<int>{3}), Error);

  nn::Param p{"t", table, Tensor({3, 2})};
  nn::embedding_backward(std::vector<int>{1}, Matrix::Ones(1, 2), p);
  CHECK(p.grad.data == std::vector<double>{0, 0, 1, 1, 0, 0});

  for (std::uint64_t s = 0; s < 10; ++s) CHECK(check_embedding(400 + s).max_rel_error < kTol);
}

TEST_CASE("cross-entropy in bits") {
  const std::vector<double> half{0.5};
  CHECK(nn::bce_loss(half, std::vector<double>{1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nn::bce_loss(half, std::vector<double>{0.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nn::bce_loss(half, std::vector<double>{0.0}, nn::LossForm::PaperForm) == 0.0);
  CHECK(std::isfinite(nn::bce_loss(std::vector<double>{0.0}, std::vector<double>{1.0})));

  // dL/dp against central differences
  const std::vector<double> p{0.2, 0.7, 0.55}, y{1.0, 0.0, 1.0};
  for (auto form : {nn::LossForm::Binary, nn::LossForm::PaperForm}) {
    const auto g = nn::bce_backward(p, y, form);
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto up = p, dn = p;
      up[i] += 1e-6;
      dn[i] -= 1e-6;
      const double num = (nn::bce_loss(up, y, form) - nn::bce_loss(dn, y, form)) / 2e-6;
      CHECK(g[i] == doctest::Approx(num).epsilon(1e-6));
    }
  }
  for (double z : {-800.0, -30.0, 0.0, 30.0, 800.0}) {
    const double s = nn::sigmoid(z);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  for (std::uint64_t s = 0; s < 10; ++s) {
    CHECK(check_logistic(500 + s, nn::LossForm::Binary).max_rel_error < kTol);
    CHECK(check_logistic(600 + s, nn::LossForm::PaperForm).max_rel_error < kTol);
  }
}

TEST_CASE("adam") {
  ParamSet ps;
  auto& p = ps.add("p", {3});
  p.value.data = {1.0, -2.0, 0.5};
  nn::AdamState st;
  p.grad.data = {1.0, 1.0, 1.0};
  nn::adam_step(ps, st);
  CHECK(p.value.data[0] - 1.0 == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(p.value.data[1] + 2.0 == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(st.step == 1);

  ParamSet zero;
  auto& q = zero.add("q", {4});
  q.value.data = {0.1, 0.2, 0.3, 0.4};
  const auto before = q.value.data;
  nn::AdamState st2;
  for (int i = 0; i < 3; ++i) nn::adam_step(zero, st2);
  CHECK(q.value.data == before);
}

TEST_CASE("initializers") {
  ParamSet ps;
  auto& w = ps.add("w", {30, 20});
  nn::Initializer init(9);
  init.glorot(w, 30, 20);
  const double bound = std::sqrt(6.0 / 50.0);
  double mx = 0;
  for (double v : w.value.data) mx = std::max(mx, std::abs(v));
  CHECK(mx <= bound);
  CHECK(mx > 0.8 * bound);

  auto& e = ps.add("e", {100, 20});
  init.normal(e, 0.1);
  double ss = 0;
  for (double v : e.value.data) ss += v * v;
  CHECK(std::sqrt(ss / 2000.0) == doctest::Approx(0.1).epsilon(0.1));
  CHECK(ps.scalar_count() == 600 + 2000);
  CHECK(ps.contains("e"));
  CHECK_THROWS(ps.at("missing"));
}

TEST_CASE("gradient checker catches a corrupted gradient") {
  Rng rng(7);
  ParamSet ps;
  auto& x = ps.add("x", {5});
  fill_uniform(x.value, rng);
  auto loss = [&] {
    double s = 0;
    for (double v : x.value.data) s += v * v * v;
    return s;
  };
  auto good = [&] {
    for (std::size_t i = 0; i < 5; ++i) x.grad.data[i] = 3 * x.value.data[i] * x.value.data[i];
  };
  auto bad = [&] {
    good();
    x.grad.data[2] *= 1.5;
  };
  CHECK(nn::grad_check(loss, good, ps).max_rel_error < 1e-6);
  const auto r = nn::grad_check(loss, bad, ps);
  CHECK(r.max_rel_error > 1e-1);
  CHECK(r.worst_index == 2);
}
