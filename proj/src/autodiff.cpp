#include "entlm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "entlm/kernels.hpp"

namespace entlm::ad {

namespace kern = entlm::kernels::omp;

template <class Real>
Var Tape<Real>::leaf(Tensor<Real>& t) {
  Node node;
  node.value.shape = t.shape;
  node.value.data = t.data;
  node.bound = &t;
  node.needs_grad = t.requires_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class Real>
Var Tape<Real>::constant(Tensor<Real> value) {
  Node node;
  node.value = std::move(value);
  node.value.requires_grad = false;
  node.value.grad.reset();
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class Real>
std::vector<Real>& Tape<Real>::grad_buffer(Var v) {
  auto& node = nodes_[v.id];
  if (node.grad.empty()) node.grad.assign(node.value.numel(), Real{0});
  return node.grad;
}

template <class Real>
Var Tape<Real>::record(Tensor<Real> value, std::vector<Var> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [this](Var v) { return nodes_[v.id].needs_grad; });
  node.inputs = std::move(inputs);
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class Real>
void Tape<Real>::backward(Var loss) {
  if (backward_done_) throw DoubleBackwardError("backward already ran on this tape; reset() first");
  if (value(loss).numel() != 1) {
    throw DimensionError("backward root must be a scalar, got " + shape_str(value(loss).shape));
  }
  backward_done_ = true;
  if (!needs_grad(loss)) return;
  grad_buffer(loss)[0] = Real{1};
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.needs_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, Var{static_cast<std::uint32_t>(i)});
  }
  for (auto& node : nodes_) {
    if (node.bound == nullptr || !node.needs_grad || node.grad.empty()) continue;
    auto& acc = node.bound->ensure_grad();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += node.grad[j];
  }
}

template <class Real>
void Tape<Real>::reset() {
  nodes_.clear();
  backward_done_ = false;
}

namespace {

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
}

template <class Real>
void axpy(std::vector<Real>& dst, std::span<const Real> src, Real s = Real{1}) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace

template <class Real>
Var matmul(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(av.shape) + " x " +
                         shape_str(bv.shape));
  }
  Tensor<Real> out({m, n});
  kern::matmul_nn<Real>(av.span(), bv.span(), out.span(), m, k, n, false);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<Real>& t, Var self) {
    const auto dc = t.grad(self);
    if (t.needs_grad(a)) {
      kern::matmul_nt<Real>(dc, t.value(b).span(), t.grad_buffer(a), m, n, k, true);
    }
    if (t.needs_grad(b)) {
      kern::matmul_tn<Real>(t.value(a).span(), dc, t.grad_buffer(b), k, m, n, true);
    }
  });
}

template <class Real>
Var matmul_nt(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_str(av.shape) + " x " +
                         shape_str(bv.shape) + "^T");
  }
  Tensor<Real> out({m, n});
  kern::matmul_nt<Real>(av.span(), bv.span(), out.span(), m, k, n, false);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<Real>& t, Var self) {
    const auto dc = t.grad(self);
    // dA = dC B, dB = dC^T A
    if (t.needs_grad(a)) {
      kern::matmul_nn<Real>(dc, t.value(b).span(), t.grad_buffer(a), m, n, k, true);
    }
    if (t.needs_grad(b)) {
      kern::matmul_tn<Real>(dc, t.value(a).span(), t.grad_buffer(b), n, m, k, true);
    }
  });
}

template <class Real>
Var add(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor<Real> out(av.shape, av.data);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<Real>& t, Var self) {
    const auto dc = t.grad(self);
    if (t.needs_grad(a)) axpy(t.grad_buffer(a), dc);
    if (t.needs_grad(b)) axpy(t.grad_buffer(b), dc);
  });
}

template <class Real>
Var add_bias(Tape<Real>& tape, Var x, Var bias) {
  const auto& xv = tape.value(x);
  const auto& bv = tape.value(bias);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (bv.numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape) + " does not match " + shape_str(xv.shape));
  }
  Tensor<Real> out(xv.shape, xv.data);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] += bv.data[c];
  }
  return tape.record(std::move(out), {x, bias}, [x, bias, rows, cols](Tape<Real>& t, Var self) {
    const auto dc = t.grad(self);
    if (t.needs_grad(x)) axpy(t.grad_buffer(x), dc);
    if (t.needs_grad(bias)) {
      auto& db = t.grad_buffer(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) db[c] += dc[r * cols + c];
      }
    }
  });
}

template <class Real>
Var mul(Tape<Real>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor<Real> out(av.shape, av.data);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<Real>& t, Var self) {
    const auto dc = t.grad(self);
    if (t.needs_grad(a)) {
      const auto& bv = t.value(b).data;
      auto& da = t.grad_buffer(a);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dc[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      const auto& av = t.value(a).data;
      auto& db = t.grad_buffer(b);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dc[i] * av[i];
    }
  });
}

template <class Real>
Var scale(Tape<Real>& tape, Var a, Real s) {
  const auto& av = tape.value(a);
  Tensor<Real> out(av.shape, av.data);
  for (auto& v : out.data) v *= s;
  return tape.record(std::move(out), {a}, [a, s](Tape<Real>& t, Var self) {
    axpy(t.grad_buffer(a), t.grad(self), s);
  });
}

template <class Real>
Var sum(Tape<Real>& tape, Var a) {
  const auto& av = tape.value(a);
  Real total{0};
  for (auto v : av.data) total += v;
  return tape.record(Tensor<Real>({1}, std::vector<Real>{total}), {a}, [a](Tape<Real>& t, Var self) {
    const Real g = t.grad(self)[0];
    for (auto& v : t.grad_buffer(a)) v += g;
  });
}

template <class Real>
Var softmax_rows(Tape<Real>& tape, Var x, const Mask& mask) {
  const auto& xv = tape.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (!mask.empty() && mask.size() != xv.numel()) {
    throw DimensionError("softmax_rows: mask length " + std::to_string(mask.size()) +
                         " does not match " + shape_str(xv.shape));
  }
  Tensor<Real> out(xv.shape);
  kern::softmax_rows<Real>(xv.span(), mask, out.span(), rows, cols);
  return tape.record(std::move(out), {x}, [x, rows, cols](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    const auto& y = t.value(self).data;
    auto& dx = t.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * cols;
      Real dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += y[off + c] * dy[off + c];
      for (std::size_t c = 0; c < cols; ++c) dx[off + c] += y[off + c] * (dy[off + c] - dot);
    }
  });
}

template <class Real>
Var layer_norm(Tape<Real>& tape, Var x, Var gamma, Var beta, Real eps) {
  if (!(eps >= Real{0})) throw DimensionError("layer_norm: eps must be non-negative");
  const auto& xv = tape.value(x);
  const auto& gv = tape.value(gamma);
  const auto& bv = tape.value(beta);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gv.numel() != cols || bv.numel() != cols) {
    throw DimensionError("layer_norm: gamma " + shape_str(gv.shape) + " / beta " + shape_str(bv.shape) +
                         " do not match " + shape_str(xv.shape));
  }
  Tensor<Real> out(xv.shape);
  std::vector<Real> mean(rows), rstd(rows);
  kern::layer_norm<Real>(xv.span(), gv.span(), bv.span(), eps, out.span(), mean, rstd, rows, cols);
  return tape.record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, cols, mean = std::move(mean), rstd = std::move(rstd)](Tape<Real>& t, Var self) {
        const auto dy = t.grad(self);
        const auto& xd = t.value(x).data;
        const auto& g = t.value(gamma).data;
        const bool want_x = t.needs_grad(x);
        const bool want_g = t.needs_grad(gamma);
        const bool want_b = t.needs_grad(beta);
        std::vector<Real> xhat(cols), dxhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * cols;
          Real mean_dxhat{0}, mean_dxhat_xhat{0};
          for (std::size_t c = 0; c < cols; ++c) {
            xhat[c] = (xd[off + c] - mean[r]) * rstd[r];
            dxhat[c] = dy[off + c] * g[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xhat[c];
          }
          mean_dxhat /= static_cast<Real>(cols);
          mean_dxhat_xhat /= static_cast<Real>(cols);
          if (want_x) {
            auto& dx = t.grad_buffer(x);
            for (std::size_t c = 0; c < cols; ++c) {
              dx[off + c] += rstd[r] * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
            }
          }
          if (want_g) {
            auto& dg = t.grad_buffer(gamma);
            for (std::size_t c = 0; c < cols; ++c) dg[c] += dy[off + c] * xhat[c];
          }
          if (want_b) {
            auto& db = t.grad_buffer(beta);
            for (std::size_t c = 0; c < cols; ++c) db[c] += dy[off + c];
          }
        }
      });
}

template <class Real>
Var gelu(Tape<Real>& tape, Var x) {
  const auto& xv = tape.value(x);
  Tensor<Real> out(xv.shape);
  kern::gelu<Real>(xv.span(), out.span());
  return tape.record(std::move(out), {x}, [x](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    const auto& xd = t.value(x).data;
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * kernels::gelu_grad_scalar(xd[i]);
  });
}

template <class Real>
Var cross_entropy(Tape<Real>& tape, Var logits, std::span<const std::int32_t> targets, const Mask& loss_mask) {
  const auto& lv = tape.value(logits);
  const std::size_t rows = lv.rows(), vocab = lv.cols();
  if (targets.size() != rows || loss_mask.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                         std::to_string(loss_mask.size()) + " mask entries for logits " + shape_str(lv.shape));
  }
  std::size_t kept = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!loss_mask[r]) continue;
    ++kept;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw VocabError("cross_entropy: target id " + std::to_string(targets[r]) + " out of range for V = " +
                       std::to_string(vocab));
    }
  }
  if (kept == 0) throw EmptyLossError("cross_entropy: every position is masked");

  // Softmax probabilities of kept rows are cached for the gradient rule.
  std::vector<Real> probs(rows * vocab, Real{0});
  Real total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (!loss_mask[r]) continue;
    const Real* row = lv.data.data() + r * vocab;
    const Real mx = *std::max_element(row, row + vocab);
    Real z{0};
    for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - mx);
    const Real log_z = mx + std::log(z);
    total += log_z - row[targets[r]];
    for (std::size_t c = 0; c < vocab; ++c) probs[r * vocab + c] = std::exp(row[c] - log_z);
  }
  const Real inv = Real{1} / static_cast<Real>(kept);
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return tape.record(
      Tensor<Real>({1}, std::vector<Real>{total * inv}), {logits},
      [logits, rows, vocab, inv, mask = loss_mask, tgt = std::move(tgt), probs = std::move(probs)](
          Tape<Real>& t, Var self) {
        const Real g = t.grad(self)[0] * inv;
        auto& dl = t.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!mask[r]) continue;
          for (std::size_t c = 0; c < vocab; ++c) dl[r * vocab + c] += g * probs[r * vocab + c];
          dl[r * vocab + static_cast<std::size_t>(tgt[r])] -= g;
        }
      });
}

template <class Real>
Var embedding(Tape<Real>& tape, Var table, std::span<const std::int32_t> ids) {
  const auto& tv = tape.value(table);
  const std::size_t n_rows = tv.rows(), dim = tv.cols();
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  Tensor<Real> out({ids.size(), dim});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= n_rows) {
      throw VocabError("embedding: id " + std::to_string(ids[t]) + " out of range for table " +
                       shape_str(tv.shape));
    }
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(ids[t] * dim), dim,
                out.data.begin() + static_cast<std::ptrdiff_t>(t * dim));
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return tape.record(std::move(out), {table}, [table, dim, idx = std::move(idx)](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    auto& dt = t.grad_buffer(table);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const std::size_t base = static_cast<std::size_t>(idx[r]) * dim;
      for (std::size_t c = 0; c < dim; ++c) dt[base + c] += dy[r * dim + c];
    }
  });
}

template <class Real>
Var slice_cols(Tape<Real>& tape, Var x, std::size_t begin, std::size_t count) {
  const auto& xv = tape.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (count == 0 || begin + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(xv.shape));
  }
  Tensor<Real> out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) out.data[r * count + c] = xv.data[r * cols + begin + c];
  }
  return tape.record(std::move(out), {x}, [x, rows, cols, begin, count](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    auto& dx = t.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) dx[r * cols + begin + c] += dy[r * count + c];
    }
  });
}

template <class Real>
Var slice_rows(Tape<Real>& tape, Var x, std::size_t begin, std::size_t count) {
  const auto& xv = tape.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (count == 0 || begin + count > rows) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(xv.shape));
  }
  const auto first = xv.data.begin() + static_cast<std::ptrdiff_t>(begin * cols);
  Tensor<Real> out({count, cols}, std::vector<Real>(first, first + static_cast<std::ptrdiff_t>(count * cols)));
  return tape.record(std::move(out), {x}, [x, cols, begin](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * cols + i] += dy[i];
  });
}

template <class Real>
Var concat_cols(Tape<Real>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = tape.value(parts[0]).rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (auto p : parts) {
    const auto& v = tape.value(p);
    if (v.rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_str(tape.value(parts[0]).shape) + " vs " +
                           shape_str(v.shape));
    }
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor<Real> out({rows, total});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = tape.value(parts[i]);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[i]; ++c) out.data[r * total + offset + c] = v.data[r * widths[i] + c];
    }
    offset += widths[i];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), inputs, [rows, total, widths](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    const auto& in = t.inputs(self);
    std::size_t off = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (t.needs_grad(in[i])) {
        auto& dx = t.grad_buffer(in[i]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[i]; ++c) dx[r * widths[i] + c] += dy[r * total + off + c];
        }
      }
      off += widths[i];
    }
  });
}

template <class Real>
Var concat_rows(Tape<Real>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = tape.value(parts[0]).cols();
  std::vector<Real> data;
  std::size_t rows = 0;
  for (auto p : parts) {
    const auto& v = tape.value(p);
    if (v.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(tape.value(parts[0]).shape) + " vs " +
                           shape_str(v.shape));
    }
    data.insert(data.end(), v.data.begin(), v.data.end());
    rows += v.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(Tensor<Real>({rows, cols}, std::move(data)), inputs, [](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    std::size_t off = 0;
    for (auto in : t.inputs(self)) {
      const std::size_t n = t.value(in).numel();
      if (t.needs_grad(in)) axpy(t.grad_buffer(in), dy.subspan(off, n));
      off += n;
    }
  });
}

template <class Real>
Var dropout(Tape<Real>& tape, Var x, Real p, std::mt19937_64& rng) {
  if (p <= Real{0}) return x;
  if (p >= Real{1}) throw DimensionError("dropout: rate must be < 1");
  const auto& xv = tape.value(x);
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  const Real s = Real{1} / (Real{1} - p);
  std::vector<Real> factor(xv.numel());
  for (auto& f : factor) f = keep(rng) ? s : Real{0};
  Tensor<Real> out(xv.shape, xv.data);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= factor[i];
  return tape.record(std::move(out), {x}, [x, factor = std::move(factor)](Tape<Real>& t, Var self) {
    const auto dy = t.grad(self);
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor[i];
  });
}

#define ENTLM_INSTANTIATE(Real)                                                                     \
  template class Tape<Real>;                                                                        \
  template Var matmul<Real>(Tape<Real>&, Var, Var);                                                 \
  template Var matmul_nt<Real>(Tape<Real>&, Var, Var);                                              \
  template Var add<Real>(Tape<Real>&, Var, Var);                                                    \
  template Var add_bias<Real>(Tape<Real>&, Var, Var);                                               \
  template Var mul<Real>(Tape<Real>&, Var, Var);                                                    \
  template Var scale<Real>(Tape<Real>&, Var, Real);                                                 \
  template Var sum<Real>(Tape<Real>&, Var);                                                         \
  template Var softmax_rows<Real>(Tape<Real>&, Var, const Mask&);                                   \
  template Var layer_norm<Real>(Tape<Real>&, Var, Var, Var, Real);                                  \
  template Var gelu<Real>(Tape<Real>&, Var);                                                        \
  template Var cross_entropy<Real>(Tape<Real>&, Var, std::span<const std::int32_t>, const Mask&);   \
  template Var embedding<Real>(Tape<Real>&, Var, std::span<const std::int32_t>);                    \
  template Var slice_cols<Real>(Tape<Real>&, Var, std::size_t, std::size_t);                        \
  template Var slice_rows<Real>(Tape<Real>&, Var, std::size_t, std::size_t);                        \
  template Var concat_cols<Real>(Tape<Real>&, std::span<const Var>);                                \
  template Var concat_rows<Real>(Tape<Real>&, std::span<const Var>);                                \
  template Var dropout<Real>(Tape<Real>&, Var, Real, std::mt19937_64&);

ENTLM_INSTANTIATE(float)
ENTLM_INSTANTIATE(double)

#undef ENTLM_INSTANTIATE

}  // namespace entlm::ad
