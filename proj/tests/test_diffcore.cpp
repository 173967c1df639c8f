#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "metapath/diffcore.hpp"

using namespace metapath::diff;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// A fixed random projection turns any output into a scalar loss with generic gradients.
double project(const Mat& y, const Mat& proj) { return (y.array() * proj.array()).sum(); }

}  // namespace

TEST_CASE("linear forward") {
  Param<double> eye(Mat::Identity(3, 3));
  const Mat x = random_mat(3, 2, 1);
  CHECK(linear(eye, x).isApprox(x));

  Param<double> w(Mat(1, 2));
  w.value << 2, 3;
  Mat ones = Mat::Ones(2, 1);
  CHECK(linear(w, ones)(0, 0) == 5.0);

  Param<double> bad(Mat::Ones(2, 4));
  CHECK_THROWS_AS(linear(bad, ones), ShapeError);
}

TEST_CASE("linear backward matches finite differences") {
  Param<double> w(random_mat(4, 3, 2));
  Param<double> x(random_mat(3, 1, 3));
  const Mat proj = random_mat(4, 1, 4);
  std::array<Param<double>*, 2> ps{&w, &x};
  const double err = grad_check<double>(
      [&] {
        const Mat y = linear(w, x.value);
        x.grad += linear_backward(w, x.value, proj);
        return project(y, proj);
      },
      ps);
  CHECK(err < 1e-4);
}

TEST_CASE("masked max") {
  Vec v(3);
  v << 0.2, 0.9, 0.9;
  SUBCASE("empty set") {
    const auto r = masked_max(v, std::vector<int>{});
    CHECK(r.value == 0.0);
    CHECK_FALSE(r.arg.has_value());
  }
  SUBCASE("ties go to the smallest index") {
    const auto r = masked_max(v, std::vector<int>{2, 1, 0});
    CHECK(r.value == 0.9);
    CHECK(*r.arg == 1);
  }
  SUBCASE("subset") {
    const auto r = masked_max(v, std::vector<int>{0});
    CHECK(r.value == 0.2);
    CHECK(*r.arg == 0);
  }
}

TEST_CASE("masked max backward routes everything to the argmax") {
  Param<double> v(random_mat(6, 1, 5));
  const std::vector<int> idx{0, 2, 3, 5};
  std::array<Param<double>*, 1> ps{&v};
  const double err = grad_check<double>(
      [&] {
        const auto r = masked_max(v.value.col(0), idx);
        Eigen::Block<Mat, -1, 1, true> g = v.grad.col(0);
        masked_max_backward(r, 1.7, g);
        return 1.7 * r.value;
      },
      ps);
  CHECK(err < 1e-4);

  v.zero_grad();
  const auto r = masked_max(v.value.col(0), idx);
  Eigen::Block<Mat, -1, 1, true> g = v.grad.col(0);
  masked_max_backward(r, 1.0, g);
  CHECK(v.grad.sum() == 1.0);
  CHECK((v.grad.array() != 0).count() == 1);

  v.zero_grad();
  masked_max_backward(masked_max(v.value.col(0), std::vector<int>{}), 1.0, g);
  CHECK(v.grad.isZero());
}

TEST_CASE("activations") {
  Vec z = Vec::Zero(1);
  CHECK(sigmoid(z)(0) == 0.5);
  Vec m(1);
  m << -3.0;
  CHECK(relu(m)(0) == 0.0);

  Param<double> x(random_mat(7, 1, 6));
  const Mat proj = random_mat(7, 1, 7);
  std::array<Param<double>*, 1> ps{&x};
  SUBCASE("sigmoid gradient") {
    const double err = grad_check<double>(
        [&] {
          const Mat y = sigmoid(x.value);
          x.grad += sigmoid_backward(y, proj);
          return project(y, proj);
        },
        ps);
    CHECK(err < 1e-4);
  }
  SUBCASE("relu gradient away from zero") {
    x.value = x.value.unaryExpr([](double v) { return std::abs(v) < 0.05 ? v + 0.2 : v; });
    const double err = grad_check<double>(
        [&] {
          const Mat y = relu(x.value);
          x.grad += relu_backward(x.value, proj);
          return project(y, proj);
        },
        ps);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("mse loss") {
  Vec a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(a, b) == 1.0);

  Param<double> p(random_mat(5, 1, 8));
  const Mat t = random_mat(5, 1, 9);
  std::array<Param<double>*, 1> ps{&p};
  const double err = grad_check<double>(
      [&] {
        p.grad += mse_loss_backward(p.value, t);
        return mse_loss(p.value, t);
      },
      ps);
  CHECK(err < 1e-4);
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<int> cls{0, 2, 1, 2};
  SUBCASE("uniform logits give ln C") {
    const auto ce = softmax_cross_entropy(Mat::Zero(3, 4), cls);
    CHECK(ce.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  SUBCASE("loss vanishes with the margin") {
    double prev = 1e9;
    for (double margin : {1.0, 5.0, 20.0, 50.0}) {
      Mat l = Mat::Zero(3, 4);
      for (int c = 0; c < 4; ++c) l(cls[c], c) = margin;
      const double loss = softmax_cross_entropy(l, cls).loss;
      CHECK(loss < prev);
      prev = loss;
    }
    CHECK(prev < 1e-12);
  }
  SUBCASE("gradient") {
    Param<double> l(random_mat(3, 4, 10));
    std::array<Param<double>*, 1> ps{&l};
    const double err = grad_check<double>(
        [&] {
          const auto ce = softmax_cross_entropy(l.value, cls);
          l.grad += ce.grad;
          return ce.loss;
        },
        ps);
    CHECK(err < 1e-4);
  }
  SUBCASE("bad class") { CHECK_THROWS_AS(softmax_cross_entropy(Mat::Zero(3, 1), std::vector<int>{3}), ShapeError); }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters alone") {
    Param<double> p(random_mat(3, 2, 11));
    const Mat before = p.value;
    AdamState<double> st;
    std::array<Param<double>*, 1> ps{&p};
    for (int k = 0; k < 5; ++k) adam_step<double>(ps, st);
    CHECK(p.value == before);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    Param<double> p(Mat::Zero(2, 1));
    p.grad << 3.0, -0.25;
    AdamState<double> st(0.01);
    std::array<Param<double>*, 1> ps{&p};
    adam_step<double>(ps, st);
    // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    CHECK(p.value(0) == doctest::Approx(-0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.value(1) == doctest::Approx(0.01 * 0.25 / (0.25 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("quadratic bowl converges") {
    Param<double> p(Mat::Constant(1, 1, 1.0));
    AdamState<double> st(0.01);
    std::array<Param<double>*, 1> ps{&p};
    for (int k = 0; k < 500; ++k) {
      p.grad = 2.0 * p.value;
      adam_step<double>(ps, st);
    }
    CHECK(std::abs(p.value(0)) < 1e-3);
  }
  SUBCASE("deterministic") {
    Param<double> a(random_mat(2, 2, 12)), b(random_mat(2, 2, 12));
    AdamState<double> sa, sb;
    std::array<Param<double>*, 1> pa{&a}, pb{&b};
    for (int k = 0; k < 10; ++k) {
      a.grad = a.value.cwiseAbs2();
      b.grad = b.value.cwiseAbs2();
      adam_step<double>(pa, sa);
      adam_step<double>(pb, sb);
    }
    CHECK(a.value == b.value);
  }
}
