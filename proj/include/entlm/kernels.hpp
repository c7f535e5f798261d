#pragma once

// Dense row-major kernels used by the autodiff tape.
//
// Two implementations share one contract: `serial` is the straight-line
// reference kept for testing, `omp` parallelizes over output rows. Every
// output element is reduced by a single thread in ascending index order, so
// both produce bit-identical results for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace entlm::kernels {

// Smallest m*n*k for which the OpenMP matmuls spawn a team.
inline constexpr std::size_t kParallelWorkThreshold = 1 << 15;

#define ENTLM_KERNEL_DECLS                                                     \
  /* C(m x n) (+)= A(m x k) * B(k x n) */                                      \
  template <class Real>                                                        \
  void matmul_nn(std::span<const Real> a, std::span<const Real> b,             \
                 std::span<Real> c, std::size_t m, std::size_t k,              \
                 std::size_t n, bool accumulate);                              \
  /* C(m x n) (+)= A(m x k) * B(n x k)^T */                                    \
  template <class Real>                                                        \
  void matmul_nt(std::span<const Real> a, std::span<const Real> b,             \
                 std::span<Real> c, std::size_t m, std::size_t k,              \
                 std::size_t n, bool accumulate);                              \
  /* C(m x n) (+)= A(k x m)^T * B(k x n) */                                    \
  template <class Real>                                                        \
  void matmul_tn(std::span<const Real> a, std::span<const Real> b,             \
                 std::span<Real> c, std::size_t m, std::size_t k,              \
                 std::size_t n, bool accumulate);                              \
  /* Row softmax with max subtraction. nonzero mask[i] keeps entry i; a row */ \
  /* with no kept entry throws InvalidMaskError. Empty mask = keep all. */     \
  template <class Real>                                                        \
  void softmax_rows(std::span<const Real> x, std::span<const std::uint8_t> mask,\
                    std::span<Real> y, std::size_t rows, std::size_t cols);    \
  /* Normalizes each row; writes per-row mean and 1/sqrt(var + eps). */        \
  template <class Real>                                                        \
  void layer_norm(std::span<const Real> x, std::span<const Real> gamma,        \
                  std::span<const Real> beta, Real eps, std::span<Real> y,     \
                  std::span<Real> mean, std::span<Real> rstd,                  \
                  std::size_t rows, std::size_t cols);                         \
  template <class Real>                                                        \
  void gelu(std::span<const Real> x, std::span<Real> y);

namespace serial {
ENTLM_KERNEL_DECLS
}  // namespace serial

namespace omp {
ENTLM_KERNEL_DECLS
}  // namespace omp

#undef ENTLM_KERNEL_DECLS

// Scalar GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <class Real>
Real gelu_scalar(Real x);

// d gelu / dx at x.
template <class Real>
Real gelu_grad_scalar(Real x);

// Threads the omp kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace entlm::kernels
