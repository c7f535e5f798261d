#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "entlm/errors.hpp"
#include "entlm/kernels.hpp"

namespace k = entlm::kernels;

namespace {

template <class Real>
std::vector<Real> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(nd(rng));
  return v;
}

}  // namespace

TEST_CASE_TEMPLATE("omp matmuls are bit-identical to the serial reference", Real, float, double) {
  std::mt19937_64 rng(7);
  // Second shape crosses the parallel threshold.
  for (auto [m, kk, n] : {std::array<std::size_t, 3>{3, 5, 4}, std::array<std::size_t, 3>{64, 48, 40}}) {
    const auto a = random_vec<Real>(m * kk, rng);
    const auto b = random_vec<Real>(kk * n, rng);
    const auto bt = random_vec<Real>(n * kk, rng);
    const auto at = random_vec<Real>(kk * m, rng);
    for (bool acc : {false, true}) {
      auto c0 = random_vec<Real>(m * n, rng);
      auto c1 = c0;
      k::serial::matmul_nn<Real>(a, b, c0, m, kk, n, acc);
      k::omp::matmul_nn<Real>(a, b, c1, m, kk, n, acc);
      CHECK(c0 == c1);
      k::serial::matmul_nt<Real>(a, bt, c0, m, kk, n, acc);
      k::omp::matmul_nt<Real>(a, bt, c1, m, kk, n, acc);
      CHECK(c0 == c1);
      k::serial::matmul_tn<Real>(at, b, c0, m, kk, n, acc);
      k::omp::matmul_tn<Real>(at, b, c1, m, kk, n, acc);
      CHECK(c0 == c1);
    }
  }
}

TEST_CASE("matmul hand oracle") {
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4);
  k::serial::matmul_nn<double>(a, b, c, 2, 2, 2, false);
  CHECK(c == std::vector<double>{19, 22, 43, 50});
  k::omp::matmul_nn<double>(a, b, c, 2, 2, 2, false);
  CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("softmax, layer norm and gelu agree across implementations") {
  std::mt19937_64 rng(11);
  const std::size_t rows = 70, cols = 65;
  const auto x = random_vec<double>(rows * cols, rng);
  std::vector<std::uint8_t> mask(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) mask[r * cols + c] = c <= r ? 1 : 0;
  }
  std::vector<double> y0(rows * cols), y1(rows * cols);
  k::serial::softmax_rows<double>(x, mask, y0, rows, cols);
  k::omp::softmax_rows<double>(x, mask, y1, rows, cols);
  CHECK(y0 == y1);

  const auto gamma = random_vec<double>(cols, rng);
  const auto beta = random_vec<double>(cols, rng);
  std::vector<double> m0(rows), m1(rows), r0(rows), r1(rows);
  k::serial::layer_norm<double>(x, gamma, beta, 1e-5, y0, m0, r0, rows, cols);
  k::omp::layer_norm<double>(x, gamma, beta, 1e-5, y1, m1, r1, rows, cols);
  CHECK(y0 == y1);
  CHECK(m0 == m1);
  CHECK(r0 == r1);

  k::serial::gelu<double>(x, y0);
  k::omp::gelu<double>(x, y1);
  CHECK(y0 == y1);
}

TEST_CASE("softmax rejects a fully masked row in both implementations") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<std::uint8_t> mask{1, 0, 0, 0};
  std::vector<double> y(4);
  CHECK_THROWS_AS(k::serial::softmax_rows<double>(x, mask, y, 2, 2), entlm::InvalidMaskError);
  CHECK_THROWS_AS(k::omp::softmax_rows<double>(x, mask, y, 2, 2), entlm::InvalidMaskError);
}

TEST_CASE("gelu scalar values") {
  CHECK(k::gelu_scalar(0.0) == 0.0);
  CHECK(std::abs(k::gelu_scalar(10.0) - 10.0) < 1e-6);
  // tanh form evaluated directly
  const double direct = 0.5 * (1 + std::tanh(std::sqrt(2 / M_PI) * (1 + 0.044715)));
  CHECK(k::gelu_scalar(1.0) == doctest::Approx(direct).epsilon(1e-15));
  CHECK(std::abs(k::gelu_scalar(1.0) - 0.841192) < 1e-6);
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const double h = 1e-6;
    const double fd = (k::gelu_scalar(x + h) - k::gelu_scalar(x - h)) / (2 * h);
    CHECK(k::gelu_grad_scalar(x) == doctest::Approx(fd).epsilon(1e-8));
  }
}
