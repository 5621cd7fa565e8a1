#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include "gpool/kernels.hpp"
#include "gpool/numerics.hpp"

using namespace gpool;

TEST_CASE("matrix constructors reject non-finite values") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1.0, nan}), NumericalError);
  CHECK_THROWS_AS(Matrix(2, 2, std::numeric_limits<double>::infinity()), NumericalError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), DimensionError);
  const Matrix z(2, 3);
  CHECK(z.size() == 6);
  CHECK(sum(z) == 0.0);
}

TEST_CASE("row_softmax examples") {
  const Matrix u = row_softmax(Matrix{{0.0, 0.0, 0.0}});
  for (std::size_t j = 0; j < 3; ++j) CHECK(u(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Matrix l = row_softmax(Matrix{{0.0, 1.0}});
  CHECK(l(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-14));
  CHECK(l(0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-14));

  const Matrix big = row_softmax(Matrix{{1000.0, 1001.0}});
  CHECK(big.all_finite());
  CHECK(std::abs(big(0, 0) - l(0, 0)) < 1e-15);
  CHECK(std::abs(big(0, 1) - l(0, 1)) < 1e-15);

  CHECK_THROWS_AS(row_softmax(Matrix(0, 3)), DimensionError);
}

TEST_CASE("row_softmax rows sum to one and are shift invariant") {
  DeterministicRng rng(11);
  for (std::size_t trial = 0; trial < 40; ++trial) {
    const std::size_t r = 1 + rng.below(64), c = 1 + rng.below(64);
    Matrix m = uniform_matrix(r, c, 20.0, rng);
    const Matrix s = row_softmax(m);
    Matrix shifted = m;
    for (std::size_t i = 0; i < r; ++i) {
      double total = 0.0;
      const double shift = rng.uniform(-50.0, 50.0);
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(s(i, j) >= 0.0);
        total += s(i, j);
        shifted(i, j) += shift;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
    const Matrix t = row_softmax(shifted);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s.data()[i] - t.data()[i]) < 1e-12);
  }
}

TEST_CASE("activations") {
  const Matrix x{{0.0, -3.0, 3.0}};
  const Matrix th = activation(x, Activation::tanh);
  const Matrix re = activation(x, Activation::relu);
  const Matrix sg = activation(x, Activation::sigmoid);
  CHECK(th(0, 0) == 0.0);
  CHECK(re(0, 1) == 0.0);
  CHECK(re(0, 2) == 3.0);
  CHECK(sg(0, 0) == 0.5);
  DeterministicRng rng(3);
  const Matrix r = uniform_matrix(8, 8, 30.0, rng);
  const Matrix t = activation(r, Activation::tanh), s = activation(r, Activation::sigmoid);
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(std::abs(t.data()[i]) <= 1.0);
    CHECK(s.data()[i] >= 0.0);
    CHECK(s.data()[i] <= 1.0);
  }
}

TEST_CASE("activation and softmax backward match finite differences") {
  DeterministicRng rng(5);
  const Matrix x = uniform_matrix(3, 4, 2.0, rng);
  const Matrix g = uniform_matrix(3, 4, 1.0, rng);
  for (Activation kind : {Activation::tanh, Activation::sigmoid, Activation::relu}) {
    const Matrix analytic = activation_backward(activation(x, kind), g, kind);
    const Matrix fd =
        central_difference_gradient([&](const Matrix& m) { return frobenius_dot(activation(m, kind), g); }, x);
    CHECK(relative_error(analytic, fd) < 1e-8);
  }
  const Matrix analytic = row_softmax_backward(row_softmax(x), g);
  const Matrix fd = central_difference_gradient([&](const Matrix& m) { return frobenius_dot(row_softmax(m), g); }, x);
  CHECK(relative_error(analytic, fd) < 1e-8);
}

TEST_CASE("central_difference_gradient examples") {
  const Matrix g = central_difference_gradient([](const Matrix& m) { return 0.5 * frobenius_dot(m, m); }, Matrix{{2.0}});
  CHECK(std::abs(g(0, 0) - 2.0) < 1e-8);

  DeterministicRng rng(9);
  const Matrix x = uniform_matrix(3, 5, 4.0, rng);
  const Matrix ones = central_difference_gradient([](const Matrix& m) { return sum(m); }, x);
  for (double v : ones.data()) CHECK(std::abs(v - 1.0) < 1e-8);

  // Degree-2 polynomial: f = xᵀQx + bᵀx, gradient (Q + Qᵀ)x + b.
  const Matrix q = uniform_matrix(5, 5, 1.0, rng);
  const Matrix b = uniform_matrix(5, 1, 1.0, rng);
  const Matrix v = uniform_matrix(5, 1, 3.0, rng);
  auto f = [&](const Matrix& m) { return frobenius_dot(m, matmul(q, m)) + frobenius_dot(b, m); };
  const Matrix exact = matmul(q + transpose(q), v) + b;
  const Matrix fd = central_difference_gradient(f, v);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(fd(i, 0) - exact(i, 0)) < 1e-8);

  CHECK_THROWS_AS(central_difference_gradient([](const Matrix& m) { return std::log(m(0, 0)); }, Matrix{{0.0}}),
                  NumericalError);
  CHECK_THROWS_AS(central_difference_gradient([](const Matrix& m) { return m(0, 0); }, Matrix{{0.0}}, 0.0),
                  InvalidArgument);
}

TEST_CASE("relative_error examples") {
  CHECK(relative_error(Matrix{{1.0, 2.0}}, Matrix{{1.0, 2.0}}) == 0.0);
  CHECK(relative_error(Matrix{{1.0}}, Matrix{{2.0}}) == 0.5);
  CHECK(relative_error(Matrix{{0.0}}, Matrix{{0.0}}) == 0.0);
  CHECK_THROWS_AS(relative_error(Matrix(1, 2), Matrix(2, 1)), DimensionError);
}

TEST_CASE("DeterministicRng follows SplitMix64") {
  DeterministicRng zero(0);
  CHECK(zero.next_u64() == 0xe220a8397b1dcdafULL);
  CHECK(zero.next_u64() == 0x6e789e6aa1b965f4ULL);
  CHECK(zero.next_u64() == 0x06c45d188009454fULL);
  DeterministicRng a(42), b(42);
  CHECK(a.next_u64() == 13679457532755275413ULL);
  CHECK(a.next_u64() == 2949826092126892291ULL);
  b.next_u64();
  b.next_u64();
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  DeterministicRng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("matrix products agree with the naive definition") {
  DeterministicRng rng(2);
  const Matrix a = uniform_matrix(4, 3, 1.0, rng), b = uniform_matrix(3, 5, 1.0, rng);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c(i, j) - s) < 1e-14);
    }
  CHECK(relative_error(matmul_tn(transpose(a), b), c) < 1e-15);
  CHECK(relative_error(matmul_nt(a, transpose(b)), c) < 1e-15);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK(trace(Matrix::identity(4)) == 4.0);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  DeterministicRng rng(17);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 13, 5}, {64, 48, 80}, {130, 70, 129}}) {
    const Matrix a = uniform_matrix(m, k, 1.0, rng), b = uniform_matrix(k, n, 1.0, rng);
    const Matrix at = transpose(a), bt = transpose(b);
    CHECK(kernels::matmul_serial(a, b) == kernels::matmul_omp(a, b));
    CHECK(kernels::matmul_tn_serial(at, b) == kernels::matmul_tn_omp(at, b));
    CHECK(kernels::matmul_nt_serial(a, bt) == kernels::matmul_nt_omp(a, bt));
    CHECK(matmul(a, b) == kernels::matmul_serial(a, b));
  }
}
