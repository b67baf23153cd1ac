#include "knight/projector.hpp"

#include <cmath>
#include <numbers>

#include "test_util.hpp"

using namespace knight;
using knight::test::error_code_of;

namespace {

double ref_gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
}

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, CounterRng& rng) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

double loss_of(const MlpParams<double>& p, const Mat<double>& x, const Mat<double>& w) {
  return mlp_forward(p, x).cwiseProduct(w).sum();
}

}  // namespace

TEST_CASE("init is deterministic and has the right parameter count") {
  auto a = mlp_init<float>(4, 8, 6, 3);
  auto b = mlp_init<float>(4, 8, 6, 3);
  CHECK(parameter_count(std::as_const(a).tensors()) == 166);
  auto ta = std::as_const(a).tensors();
  auto tb = std::as_const(b).tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i].second == *tb[i].second);
  CHECK(ta[0].first == "mlp.w1");
  CHECK(ta[5].first == "mlp.b3");
  CHECK(a.b1.isZero());
  CHECK_FALSE(a.w1.isZero());
  auto c = mlp_init<float>(4, 8, 6, 4);
  CHECK_FALSE(c.w1 == a.w1);
}

TEST_CASE("zero parameters give zero output") {
  auto p = mlp_init<double>(4, 8, 6, 1).zeros_like();
  CounterRng rng(2);
  auto y = mlp_forward(p, random_mat(3, 4, rng));
  CHECK(y.rows() == 3);
  CHECK(y.cols() == 6);
  CHECK(y.isZero());
}

TEST_CASE("scalar path matches a hand calculation") {
  MlpParams<double> p;
  p.w1 = Mat<double>::Constant(1, 1, 2.0);
  p.b1 = Mat<double>::Constant(1, 1, 0.5);
  p.w2 = Mat<double>::Constant(1, 1, -1.0);
  p.b2 = Mat<double>::Constant(1, 1, 0.25);
  p.w3 = Mat<double>::Constant(1, 1, 3.0);
  p.b3 = Mat<double>::Constant(1, 1, -0.5);
  const double x = 0.3;
  const double h1 = ref_gelu(2.0 * x + 0.5);
  const double h2 = ref_gelu(-1.0 * h1 + 0.25);
  const double expected = 3.0 * h2 - 0.5;
  auto y = mlp_forward(p, Mat<double>(Mat<double>::Constant(1, 1, x)));
  CHECK(y(0, 0) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("a batch equals row-by-row calls") {
  auto p = mlp_init<float>(5, 7, 4, 9);
  CounterRng rng(5);
  Mat<float> x = random_mat(3, 5, rng).cast<float>();
  auto batch = mlp_forward(p, x);
  for (Eigen::Index r = 0; r < 3; ++r) {
    Mat<float> row = x.row(r);
    CHECK((mlp_forward(p, row) - batch.row(r)).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("wrong input width is rejected") {
  auto p = mlp_init<float>(5, 7, 4, 9);
  CHECK(error_code_of([&] { mlp_forward(p, Mat<float>(Mat<float>::Zero(2, 3))); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  auto p = mlp_init<double>(3, 4, 2, 1);
  CounterRng rng(6);
  MlpCache<double> cache;
  mlp_forward(p, random_mat(2, 3, rng), &cache);
  auto grads = p.zeros_like();
  auto dx = mlp_backward(p, cache, Mat<double>(Mat<double>::Zero(2, 2)), grads);
  CHECK(dx.isZero());
  for (const auto& [name, g] : std::as_const(grads).tensors()) CHECK(g->isZero());
}

TEST_CASE("backward matches central finite differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = mlp_init<double>(3, 3, 3, seed);
    CounterRng rng(seed + 100);
    // Nonzero biases so every parameter is exercised.
    for (auto& [name, m] : p.tensors()) *m = random_mat(m->rows(), m->cols(), rng) * 0.5;
    Mat<double> x = random_mat(2, 3, rng);
    Mat<double> w = random_mat(2, 3, rng);  // loss = sum(w .* y)

    MlpCache<double> cache;
    mlp_forward(p, x, &cache);
    auto grads = p.zeros_like();
    Mat<double> dx = mlp_backward(p, cache, w, grads);

    const double h = 1e-3;
    auto params = p.tensors();
    auto analytic = std::as_const(grads).tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
      Mat<double>& m = *params[t].second;
      Mat<double> numeric(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = loss_of(p, x, w);
        m.data()[i] = keep - h;
        const double down = loss_of(p, x, w);
        m.data()[i] = keep;
        numeric.data()[i] = (up - down) / (2 * h);
      }
      const double rel = (numeric - *analytic[t].second).norm() /
                         std::max(1e-12, numeric.norm() + analytic[t].second->norm());
      INFO(params[t].first);
      CHECK(rel < 1e-4);
    }
    Mat<double> numeric_x(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double keep = x.data()[i];
      x.data()[i] = keep + h;
      const double up = loss_of(p, x, w);
      x.data()[i] = keep - h;
      const double down = loss_of(p, x, w);
      x.data()[i] = keep;
      numeric_x.data()[i] = (up - down) / (2 * h);
    }
    CHECK((numeric_x - dx).norm() / (numeric_x.norm() + dx.norm()) < 1e-4);
  }
}
