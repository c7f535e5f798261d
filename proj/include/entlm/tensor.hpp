#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "entlm/errors.hpp"

namespace entlm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. A 1-D tensor of length n is treated as 1 x n by the
// 2-D operations.
template <class Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;
  bool requires_grad = false;
  std::optional<std::vector<Real>> grad;

  Tensor() = default;

  explicit Tensor(Shape s, Real fill = Real{0}) : shape(std::move(s)), data(shape_numel(shape), fill) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
  }

  Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (data.size() != shape_numel(shape)) {
      throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                           shape_str(shape));
    }
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.size() <= 1 ? 1 : numel() / shape.back(); }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<Real> span() { return data; }
  std::span<const Real> span() const { return data; }

  void zero_grad() { grad.reset(); }

  std::vector<Real>& ensure_grad() {
    if (!grad) grad.emplace(data.size(), Real{0});
    return *grad;
  }
};

}  // namespace entlm
