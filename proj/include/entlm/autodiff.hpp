#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// Every operation evaluates eagerly and appends a node holding its value, the
// ids of its inputs, and a gradient rule. `Tape::backward` replays the nodes in
// reverse creation order, so each rule runs exactly once and a value consumed
// by several operations receives the sum of their contributions. Leaves bound
// to an external Tensor with requires_grad add their gradient into
// Tensor::grad when the replay finishes.

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "entlm/tensor.hpp"

namespace entlm::ad {

// Per-entry keep flags (nonzero keeps) for masked softmax / losses.
using Mask = std::vector<std::uint8_t>;

struct Var {
  std::uint32_t id = 0;
};

template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Copies the tensor value; gradients flow back to `t.grad` when
  // `t.requires_grad` is set. `t` must outlive the tape's backward pass.
  Var leaf(Tensor<Real>& t);
  Var constant(Tensor<Real> value);

  const Tensor<Real>& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Gradient of the backward root with respect to `v`; empty if none reached it.
  std::span<const Real> grad(Var v) const { return nodes_[v.id].grad; }

  // Lazily zero-allocated accumulator; used by gradient rules.
  std::vector<Real>& grad_buffer(Var v);

  Var record(Tensor<Real> value, std::vector<Var> inputs, BackwardFn fn);
  const std::vector<Var>& inputs(Var v) const { return nodes_[v.id].inputs; }

  // Seeds d loss / d loss = 1 and replays the tape. `loss` must be a single
  // element. Throws DoubleBackwardError if called again before reset().
  void backward(Var loss);
  void reset();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    std::vector<Var> inputs;
    BackwardFn backward;
    std::vector<Real> grad;
    Tensor<Real>* bound = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// C = A B.
template <class Real>
Var matmul(Tape<Real>& tape, Var a, Var b);

// C = A B^T.
template <class Real>
Var matmul_nt(Tape<Real>& tape, Var a, Var b);

template <class Real>
Var add(Tape<Real>& tape, Var a, Var b);

// x[r, c] + bias[c].
template <class Real>
Var add_bias(Tape<Real>& tape, Var x, Var bias);

// Elementwise product.
template <class Real>
Var mul(Tape<Real>& tape, Var a, Var b);

template <class Real>
Var scale(Tape<Real>& tape, Var a, Real s);

// Sum of all entries as a 1-element tensor.
template <class Real>
Var sum(Tape<Real>& tape, Var a);

// Row softmax. `mask` is empty (keep everything) or rows x cols keep flags.
template <class Real>
Var softmax_rows(Tape<Real>& tape, Var x, const Mask& mask = {});

template <class Real>
Var layer_norm(Tape<Real>& tape, Var x, Var gamma, Var beta, Real eps);

template <class Real>
Var gelu(Tape<Real>& tape, Var x);

// Mean over kept rows of -log softmax(logits[t])[targets[t]].
template <class Real>
Var cross_entropy(Tape<Real>& tape, Var logits, std::span<const std::int32_t> targets,
                  const Mask& loss_mask);

// Row gather: out[t] = table[ids[t]].
template <class Real>
Var embedding(Tape<Real>& tape, Var table, std::span<const std::int32_t> ids);

template <class Real>
Var slice_cols(Tape<Real>& tape, Var x, std::size_t begin, std::size_t count);

template <class Real>
Var slice_rows(Tape<Real>& tape, Var x, std::size_t begin, std::size_t count);

template <class Real>
Var concat_cols(Tape<Real>& tape, std::span<const Var> parts);

template <class Real>
Var concat_rows(Tape<Real>& tape, std::span<const Var> parts);

// Inverted dropout: zeroes entries with probability p, scales survivors by
// 1 / (1 - p). p == 0 returns x unchanged.
template <class Real>
Var dropout(Tape<Real>& tape, Var x, Real p, std::mt19937_64& rng);

}  // namespace entlm::ad
