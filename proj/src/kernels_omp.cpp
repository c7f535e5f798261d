#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "entlm/errors.hpp"
#include "entlm/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace entlm::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

namespace {

bool worth_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return m > 1 && m * k * n >= kParallelWorkThreshold;
}

}  // namespace

// i-p-j loop order: each c[i, j] still sums its terms in ascending p, which
// keeps the result bit-identical to the serial dot-product form.
template <class Real>
void matmul_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Real* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, Real{0});
    const Real* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class Real>
void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const Real* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b.data() + j * k;
      Real acc = accumulate ? c[i * n + j] : Real{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

template <class Real>
void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Real* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, Real{0});
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[p * m + i];
      const Real* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class Real>
void softmax_rows(std::span<const Real> x, std::span<const std::uint8_t> mask, std::span<Real> y,
                  std::size_t rows, std::size_t cols) {
  const bool masked = !mask.empty();
  if (masked) {
    // Validate up front: exceptions cannot leave a parallel region.
    for (std::size_t r = 0; r < rows; ++r) {
      const auto first = mask.begin() + static_cast<std::ptrdiff_t>(r * cols);
      if (std::none_of(first, first + static_cast<std::ptrdiff_t>(cols), [](std::uint8_t v) { return v != 0; })) {
        throw InvalidMaskError("softmax row " + std::to_string(r) + " is fully masked");
      }
    }
  }
  const auto nrows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (worth_parallel(rows, cols, 8))
  for (std::int64_t rr = 0; rr < nrows; ++rr) {
    const std::size_t off = static_cast<std::size_t>(rr) * cols;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (masked && !mask[off + j]) continue;
      mx = std::max(mx, x[off + j]);
    }
    Real sum{0};
    for (std::size_t j = 0; j < cols; ++j) {
      if (masked && !mask[off + j]) {
        y[off + j] = Real{0};
        continue;
      }
      y[off + j] = std::exp(x[off + j] - mx);
      sum += y[off + j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[off + j] /= sum;
  }
}

template <class Real>
void layer_norm(std::span<const Real> x, std::span<const Real> gamma, std::span<const Real> beta,
                Real eps, std::span<Real> y, std::span<Real> mean, std::span<Real> rstd,
                std::size_t rows, std::size_t cols) {
  const auto nrows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (worth_parallel(rows, cols, 8))
  for (std::int64_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const std::size_t off = r * cols;
    Real mu{0};
    for (std::size_t j = 0; j < cols; ++j) mu += x[off + j];
    mu /= static_cast<Real>(cols);
    Real var{0};
    for (std::size_t j = 0; j < cols; ++j) {
      const Real d = x[off + j] - mu;
      var += d * d;
    }
    var /= static_cast<Real>(cols);
    const Real rs = Real{1} / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (std::size_t j = 0; j < cols; ++j) {
      y[off + j] = (var + eps == Real{0} ? Real{0} : (x[off + j] - mu) * rs) * gamma[j] + beta[j];
    }
  }
}

template <class Real>
void gelu(std::span<const Real> x, std::span<Real> y) {
  const auto count = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWorkThreshold / 8)
  for (std::int64_t i = 0; i < count; ++i) {
    y[static_cast<std::size_t>(i)] = gelu_scalar(x[static_cast<std::size_t>(i)]);
  }
}

#define ENTLM_INSTANTIATE(Real)                                                                   \
  template void matmul_nn<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>,    \
                                std::size_t, std::size_t, std::size_t, bool);                     \
  template void matmul_nt<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>,    \
                                std::size_t, std::size_t, std::size_t, bool);                     \
  template void matmul_tn<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>,    \
                                std::size_t, std::size_t, std::size_t, bool);                     \
  template void softmax_rows<Real>(std::span<const Real>, std::span<const std::uint8_t>, std::span<Real>, \
                                   std::size_t, std::size_t);                                     \
  template void layer_norm<Real>(std::span<const Real>, std::span<const Real>,                    \
                                 std::span<const Real>, Real, std::span<Real>, std::span<Real>,   \
                                 std::span<Real>, std::size_t, std::size_t);                      \
  template void gelu<Real>(std::span<const Real>, std::span<Real>);

ENTLM_INSTANTIATE(float)
ENTLM_INSTANTIATE(double)

#undef ENTLM_INSTANTIATE

}  // namespace omp
}  // namespace entlm::kernels
