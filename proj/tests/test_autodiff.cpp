#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "entlm/autodiff.hpp"
#include "fd_oracle.hpp"

using entlm::Tensor;
using namespace entlm::ad;
using entlm::testing::central_difference;
using entlm::testing::max_rel_err;

namespace {

Tensor<double> random_tensor(entlm::Shape shape, std::uint64_t seed, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = nd(rng);
  t.requires_grad = grad;
  return t;
}

// Builds a scalar from the leaves; compares tape gradients of each leaf with
// finite differences of the same builder.
double grad_check(std::vector<Tensor<double>*> leaves,
                  const std::function<Var(Tape<double>&, std::vector<Var>&)>& build) {
  auto eval = [&] {
    Tape<double> tape;
    std::vector<Var> vars;
    for (auto* l : leaves) vars.push_back(tape.leaf(*l));
    return tape.value(build(tape, vars)).data[0];
  };
  for (auto* l : leaves) {
    l->requires_grad = true;
    l->zero_grad();
  }
  Tape<double> tape;
  std::vector<Var> vars;
  for (auto* l : leaves) vars.push_back(tape.leaf(*l));
  tape.backward(build(tape, vars));
  double worst = 0;
  for (auto* l : leaves) {
    const auto numeric = central_difference(l->data, eval);
    worst = std::max(worst, max_rel_err(*l->grad, numeric));
  }
  return worst;
}

// A fixed random projection so every gradient entry is exercised.
Var weighted_sum(Tape<double>& tape, Var x, std::uint64_t seed) {
  auto w = random_tensor(tape.value(x).shape, seed, false);
  return sum(tape, mul(tape, x, tape.constant(std::move(w))));
}

}  // namespace

TEST_CASE("matmul values") {
  Tape<double> tape;
  auto eye = tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto b = tape.constant(Tensor<double>({2, 2}, {2, 3, 4, 5}));
  CHECK(tape.value(matmul(tape, eye, b)).data == std::vector<double>{2, 3, 4, 5});
  auto a = tape.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto c = tape.constant(Tensor<double>({2, 2}, {5, 6, 7, 8}));
  CHECK(tape.value(matmul(tape, a, c)).data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({2, 3}));
  try {
    matmul(tape, a, b);
    FAIL("expected DimensionError");
  } catch (const entlm::DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(A B) w.r.t. A is ones B^T") {
  auto a = random_tensor({3, 4}, 1);
  auto b = random_tensor({4, 2}, 2, false);
  Tape<double> tape;
  auto av = tape.leaf(a);
  tape.backward(sum(tape, matmul(tape, av, tape.leaf(b))));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK((*a.grad)[i * 4 + j] == doctest::Approx(b(j, 0) + b(j, 1)).epsilon(1e-14));
    }
  }
  auto fd_ok = grad_check({&a, &b}, [](Tape<double>& t, std::vector<Var>& v) {
    return sum(t, matmul(t, v[0], v[1]));
  });
  CHECK(fd_ok < 1e-3);
}

TEST_CASE("finite-difference agreement for every differentiable op") {
  SUBCASE("matmul and matmul_nt") {
    auto a = random_tensor({3, 4}, 3), b = random_tensor({4, 5}, 4), c = random_tensor({2, 4}, 5);
    CHECK(grad_check({&a, &b}, [](Tape<double>& t, std::vector<Var>& v) {
            return weighted_sum(t, matmul(t, v[0], v[1]), 9);
          }) < 1e-3);
    CHECK(grad_check({&a, &c}, [](Tape<double>& t, std::vector<Var>& v) {
            return weighted_sum(t, matmul_nt(t, v[0], v[1]), 10);
          }) < 1e-3);
  }
  SUBCASE("add, add_bias, mul, scale") {
    auto a = random_tensor({3, 4}, 6), b = random_tensor({3, 4}, 7), bias = random_tensor({4}, 8);
    CHECK(grad_check({&a, &b, &bias}, [](Tape<double>& t, std::vector<Var>& v) {
            auto x = add_bias(t, add(t, v[0], scale(t, v[1], 0.5)), v[2]);
            return weighted_sum(t, mul(t, x, v[0]), 11);
          }) < 1e-3);
  }
  SUBCASE("softmax_rows with a causal mask") {
    auto x = random_tensor({4, 4}, 12);
    Mask mask(16);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) mask[r * 4 + c] = c <= r;
    }
    CHECK(grad_check({&x}, [&](Tape<double>& t, std::vector<Var>& v) {
            return weighted_sum(t, softmax_rows(t, v[0], mask), 13);
          }) < 1e-3);
  }
  SUBCASE("layer_norm") {
    auto x = random_tensor({3, 6}, 14), g = random_tensor({6}, 15), b = random_tensor({6}, 16);
    CHECK(grad_check({&x, &g, &b}, [](Tape<double>& t, std::vector<Var>& v) {
            return weighted_sum(t, layer_norm(t, v[0], v[1], v[2], 1e-5), 17);
          }) < 1e-3);
  }
  SUBCASE("gelu") {
    auto x = random_tensor({2, 5}, 18);
    CHECK(grad_check({&x}, [](Tape<double>& t, std::vector<Var>& v) {
            return weighted_sum(t, gelu(t, v[0]), 19);
          }) < 1e-3);
  }
  SUBCASE("cross_entropy") {
    auto logits = random_tensor({4, 6}, 20);
    const std::vector<std::int32_t> targets{1, 5, 0, 3};
    const Mask mask{1, 0, 1, 1};
    CHECK(grad_check({&logits}, [&](Tape<double>& t, std::vector<Var>& v) {
            return cross_entropy(t, v[0], targets, mask);
          }) < 1e-3);
  }
  SUBCASE("embedding, slicing and concatenation") {
    auto table = random_tensor({5, 4}, 21), other = random_tensor({2, 4}, 22);
    const std::vector<std::int32_t> ids{3, 0, 3};
    CHECK(grad_check({&table, &other}, [&](Tape<double>& t, std::vector<Var>& v) {
            auto e = embedding(t, v[0], ids);
            std::vector<Var> rows{v[1], e};
            auto stacked = concat_rows<double>(t, rows);
            std::vector<Var> cols{slice_cols(t, stacked, 2, 2), slice_cols(t, stacked, 0, 1)};
            auto joined = concat_cols<double>(t, cols);
            return weighted_sum(t, slice_rows(t, joined, 1, 3), 23);
          }) < 1e-3);
  }
}

TEST_CASE("softmax_rows values") {
  Tape<double> tape;
  auto y = softmax_rows(tape, tape.constant(Tensor<double>({1, 3}, {5, 5, 5})));
  for (double v : tape.value(y).data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  auto y2 = softmax_rows(tape, tape.constant(Tensor<double>({1, 2}, {0, std::log(2.0)})));
  CHECK(tape.value(y2).data[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(tape.value(y2).data[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));

  auto y3 = softmax_rows(tape, tape.constant(Tensor<double>({1, 3}, {1, 2, 3})), Mask{1, 1, 0});
  const double e = std::exp(1.0);
  CHECK(tape.value(y3).data[0] == doctest::Approx(1 / (1 + e)).epsilon(1e-14));
  CHECK(tape.value(y3).data[1] == doctest::Approx(e / (1 + e)).epsilon(1e-14));
  CHECK(tape.value(y3).data[2] == 0.0);

  CHECK_THROWS_AS(softmax_rows(tape, tape.constant(Tensor<double>({1, 2}, {1, 2})), Mask{0, 0}),
                  entlm::InvalidMaskError);
}

TEST_CASE("softmax rows sum to one and masked entries are exactly zero") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> dim(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    auto x = random_tensor({r, c}, rng(), false);
    for (auto& v : x.data) v *= 30;
    Mask mask(r * c);
    std::bernoulli_distribution keep(0.6);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) mask[i * c + j] = keep(rng);
      mask[i * c + rng() % c] = 1;
    }
    Tape<double> tape;
    const auto& y = tape.value(softmax_rows(tape, tape.constant(x), mask));
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        if (!mask[i * c + j]) CHECK(y.data[i * c + j] == 0.0);
        s += y.data[i * c + j];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm values") {
  Tape<double> tape;
  auto ones = tape.constant(Tensor<double>({2}, {1, 1}));
  auto zeros = tape.constant(Tensor<double>({2}, {0, 0}));
  auto y = layer_norm(tape, tape.constant(Tensor<double>({1, 2}, {1, 3})), ones, zeros, 0.0);
  CHECK(tape.value(y).data == std::vector<double>{-1, 1});

  auto ones3 = tape.constant(Tensor<double>({3}, {1, 1, 1}));
  auto zeros3 = tape.constant(Tensor<double>({3}, {0, 0, 0}));
  auto y2 = layer_norm(tape, tape.constant(Tensor<double>({1, 3}, {4, 4, 4})), ones3, zeros3, 1e-5);
  CHECK(tape.value(y2).data == std::vector<double>{0, 0, 0});
}

TEST_CASE("cross_entropy values and errors") {
  Tape<double> tape;
  auto uniform = tape.constant(Tensor<double>({3, 32}));
  const std::vector<std::int32_t> t3{0, 7, 31};
  CHECK(std::abs(tape.value(cross_entropy(tape, uniform, t3, Mask{1, 1, 1})).data[0] - std::log(32.0)) < 1e-12);

  Tensor<double> peaked({1, 4});
  peaked.data[2] = 100;
  const std::vector<std::int32_t> t1{2};
  CHECK(tape.value(cross_entropy(tape, tape.constant(peaked), t1, Mask{1})).data[0] < 1e-6);

  // Brute-force per-position -log softmax summation.
  auto logits = random_tensor({3, 5}, 31, false);
  const std::vector<std::int32_t> targets{4, 0, 2};
  double expected = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits(r, c));
    expected += -std::log(std::exp(logits(r, static_cast<std::size_t>(targets[r]))) / z);
  }
  expected /= 3;
  CHECK(std::abs(tape.value(cross_entropy(tape, tape.constant(logits), targets, Mask{1, 1, 1})).data[0] -
                 expected) < 1e-12);

  CHECK_THROWS_AS(cross_entropy(tape, uniform, t3, Mask{0, 0, 0}), entlm::EmptyLossError);
  const std::vector<std::int32_t> bad{0, 32, 1};
  CHECK_THROWS_AS(cross_entropy(tape, uniform, bad, Mask{1, 1, 1}), entlm::VocabError);
  // A masked-out target is never range-checked.
  CHECK_NOTHROW(cross_entropy(tape, uniform, bad, Mask{1, 0, 1}));
}

TEST_CASE("backward examples") {
  Tensor<double> x({2, 3}, {1, -2, 3, 0.5, 7, 9});
  x.requires_grad = true;
  {
    Tape<double> tape;
    tape.backward(sum(tape, tape.leaf(x)));
    CHECK(*x.grad == std::vector<double>(6, 1.0));
  }
  Tensor<double> y({3}, {1, 2, 3});
  y.requires_grad = true;
  Tape<double> tape;
  auto v = tape.leaf(y);
  tape.backward(sum(tape, mul(tape, v, v)));
  CHECK(*y.grad == std::vector<double>{2, 4, 6});
  CHECK_THROWS_AS(tape.backward(Var{0}), entlm::DoubleBackwardError);
  tape.reset();
  CHECK(tape.size() == 0);
}

TEST_CASE("gradients accumulate additively across consumers") {
  Tensor<double> x({3}, {0.5, -1, 2});
  x.requires_grad = true;
  Tape<double> tape;
  auto v = tape.leaf(x);
  // Three consumers, each with gradient 1.
  std::vector<Var> parts{sum(tape, v), sum(tape, v), sum(tape, v)};
  auto total = add(tape, add(tape, parts[0], parts[1]), parts[2]);
  tape.backward(total);
  CHECK(*x.grad == std::vector<double>{3, 3, 3});
}

TEST_CASE("gradient accumulation is order-independent") {
  auto x = random_tensor({4, 3}, 41);
  auto w = random_tensor({3, 3}, 42, false);
  auto run = [&](bool swap) {
    x.zero_grad();
    Tape<double> tape;
    auto xv = tape.leaf(x);
    auto wv = tape.leaf(w);
    Var first, second;
    if (swap) {
      second = weighted_sum(tape, gelu(tape, xv), 44);
      first = weighted_sum(tape, matmul(tape, xv, wv), 43);
    } else {
      first = weighted_sum(tape, matmul(tape, xv, wv), 43);
      second = weighted_sum(tape, gelu(tape, xv), 44);
    }
    tape.backward(add(tape, first, second));
    return *x.grad;
  };
  const auto a = run(false);
  const auto b = run(true);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("dropout is deterministic under seed and identity at p = 0") {
  auto x = random_tensor({4, 8}, 51, false);
  Tape<double> tape;
  auto xv = tape.constant(x);
  std::mt19937_64 rng(5);
  CHECK(dropout(tape, xv, 0.0, rng).id == xv.id);
  std::mt19937_64 r1(9), r2(9);
  const auto& a = tape.value(dropout(tape, xv, 0.5, r1)).data;
  const auto& b = tape.value(dropout(tape, xv, 0.5, r2)).data;
  CHECK(a == b);
}
