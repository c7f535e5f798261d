#include "entlm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "entlm/errors.hpp"

namespace entlm::kernels {

template <class Real>
Real gelu_scalar(Real x) {
  const Real k = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  const Real c = static_cast<Real>(0.044715);
  return static_cast<Real>(0.5) * x * (Real{1} + std::tanh(k * (x + c * x * x * x)));
}

template <class Real>
Real gelu_grad_scalar(Real x) {
  const Real k = static_cast<Real>(0.7978845608028654);
  const Real c = static_cast<Real>(0.044715);
  const Real t = std::tanh(k * (x + c * x * x * x));
  const Real dt = (Real{1} - t * t) * k * (Real{1} + Real{3} * c * x * x);
  return static_cast<Real>(0.5) * (Real{1} + t) + static_cast<Real>(0.5) * x * dt;
}

template float gelu_scalar<float>(float);
template double gelu_scalar<double>(double);
template float gelu_grad_scalar<float>(float);
template double gelu_grad_scalar<double>(double);

namespace serial {

template <class Real>
void matmul_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = accumulate ? c[i * n + j] : Real{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <class Real>
void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = accumulate ? c[i * n + j] : Real{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

template <class Real>
void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = accumulate ? c[i * n + j] : Real{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <class Real>
void softmax_rows(std::span<const Real> x, std::span<const std::uint8_t> mask, std::span<Real> y,
                  std::size_t rows, std::size_t cols) {
  const bool masked = !mask.empty();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t off = r * cols;
    Real mx = -std::numeric_limits<Real>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (masked && !mask[off + j]) continue;
      any = true;
      mx = std::max(mx, x[off + j]);
    }
    if (!any) {
      throw InvalidMaskError("softmax row " + std::to_string(r) + " is fully masked");
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
  for (std::size_t r = 0; r < rows; ++r) {
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
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
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

}  // namespace serial
}  // namespace entlm::kernels
