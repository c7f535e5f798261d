#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "entlm/errors.hpp"
#include "entlm/model.hpp"
#include "fd_oracle.hpp"

using namespace entlm;
using entlm::testing::central_difference;
using entlm::testing::max_rel_err;

namespace {

using Mat = std::vector<std::vector<double>>;

TokenSequence make_seq(std::vector<TokenId> ids, std::vector<std::int32_t> tags = {},
                       std::vector<std::int32_t> flags = {}) {
  TokenSequence s;
  const auto n = ids.size();
  s.ids = std::move(ids);
  s.lexical_tags = tags.empty() ? std::vector<std::int32_t>(n, 3) : std::move(tags);
  s.entity_flags = flags.empty() ? std::vector<std::int32_t>(n, 0) : std::move(flags);
  s.loss_mask.assign(n, 1);
  s.loss_mask[0] = 0;
  for (std::size_t i = 0; i < n; ++i) s.position_ids.push_back(static_cast<std::int32_t>(i));
  return s;
}

void randomize(Parameters<double>& p, std::uint64_t seed, double sd = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  p.visit([&](const std::string&, Tensor<double>& t) {
    for (auto& v : t.data) v = nd(rng);
  });
}

Tensor<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<double> t({r, c});
  for (auto& v : t.data) v = nd(rng);
  return t;
}

// ---- Straight-line oracle, written from the formulas over nested vectors ----

double at(const Tensor<double>& t, std::size_t r, std::size_t c) { return t.data[r * t.shape.back() + c]; }

Mat lin(const Mat& x, const Tensor<double>& w, const Tensor<double>* b) {
  const std::size_t in = w.shape[0], out = w.shape[1];
  Mat y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      double s = b ? b->data[j] : 0.0;
      for (std::size_t k = 0; k < in; ++k) s += x[i][k] * at(w, k, j);
      y[i][j] = s;
    }
  }
  return y;
}

Mat norm(const Mat& x, const Tensor<double>& g, const Tensor<double>& b, double eps) {
  Mat y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mu = 0;
    for (double v : x[i]) mu += v;
    mu /= n;
    double var = 0;
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j) y[i][j] = g.data[j] * (x[i][j] - mu) / std::sqrt(var + eps) + b.data[j];
  }
  return y;
}

double gelu_ref(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

// One head over columns [c0, c0 + dk) of q, k, v with a causal mask.
Mat head(const Mat& q, const Mat& k, const Mat& v, std::size_t c0, std::size_t dk) {
  const std::size_t n = q.size();
  Mat out(n, std::vector<double>(dk, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(i + 1);
    double mx = -INFINITY;
    for (std::size_t j = 0; j <= i; ++j) {
      double d = 0;
      for (std::size_t c = 0; c < dk; ++c) d += q[i][c0 + c] * k[j][c0 + c];
      s[j] = d / std::sqrt(static_cast<double>(dk));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t c = 0; c < dk; ++c) out[i][c] += s[j] / z * v[j][c0 + c];
    }
  }
  return out;
}

Mat oracle_logits(const Parameters<double>& p, const TokenSequence& s, const ModelConfig& cfg,
                  const Tensor<double>* prompts = nullptr) {
  const std::size_t H = cfg.hidden, dk = cfg.head_dim();
  const std::size_t P = prompts ? prompts->shape[0] : 0;
  Mat x;
  for (std::size_t r = 0; r < P; ++r) {
    x.emplace_back(H);
    for (std::size_t c = 0; c < H; ++c) x.back()[c] = at(*prompts, r, c);
  }
  for (std::size_t t = 0; t < s.size(); ++t) {
    x.emplace_back(H);
    for (std::size_t c = 0; c < H; ++c) {
      double e = at(p.tok_emb, s.ids[t], c) + at(p.pos_emb, s.position_ids[t], c);
      if (cfg.lexical) e += at(p.lex_emb, s.lexical_tags[t], c);
      if (cfg.entity) e += at(p.ent_emb, s.entity_flags[t], c);
      x.back()[c] = e;
    }
  }
  for (const auto& l : p.layers) {
    const auto a = norm(x, l.ln1_gamma, l.ln1_beta, cfg.ln_eps);
    const auto q = lin(a, l.wq, &l.bq), k = lin(a, l.wk, &l.bk), v = lin(a, l.wv, &l.bv);
    Mat cat(x.size(), std::vector<double>(H));
    for (std::size_t hh = 0; hh < cfg.n_heads; ++hh) {
      const auto o = head(q, k, v, hh * dk, dk);
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t c = 0; c < dk; ++c) cat[i][hh * dk + c] = o[i][c];
      }
    }
    const auto attn = lin(cat, l.wo, &l.bo);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t c = 0; c < H; ++c) x[i][c] += attn[i][c];
    }
    auto f = lin(norm(x, l.ln2_gamma, l.ln2_beta, cfg.ln_eps), l.w1, &l.b1);
    for (auto& row : f) {
      for (auto& e : row) e = gelu_ref(e);
    }
    const auto m = lin(f, l.w2, &l.b2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t c = 0; c < H; ++c) x[i][c] += m[i][c];
    }
  }
  x.erase(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(P));
  const auto y = norm(x, p.lnf_gamma, p.lnf_beta, cfg.ln_eps);
  Mat logits(y.size(), std::vector<double>(cfg.vocab, 0.0));
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t w = 0; w < cfg.vocab; ++w) {
      for (std::size_t c = 0; c < H; ++c) logits[i][w] += y[i][c] * at(p.tok_emb, w, c);
    }
  }
  return logits;
}

double max_abs_diff(const Tensor<double>& got, const Mat& want) {
  double worst = 0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    for (std::size_t j = 0; j < want[i].size(); ++j) worst = std::max(worst, std::abs(got(i, j) - want[i][j]));
  }
  return worst;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 1;
  c.hidden = 2;
  c.vocab = 3;
  c.max_len = 4;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("model config validation and text round trip") {
  ModelConfig c;
  c.vocab = 10;
  c.hidden = 50;
  c.n_heads = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.hidden = 48;
  c.lexical = true;
  c.dropout = 0.25;
  c.validate();
  CHECK(ModelConfig::from_text(c.to_text()) == c);
  CHECK_THROWS_AS(ModelConfig::from_text("colour=blue\n"), ConfigError);
}

TEST_CASE("init_parameters is deterministic and follows the init scheme") {
  ModelConfig c;
  c.vocab = 9;
  const auto a = init_parameters<float>(c, 3), b = init_parameters<float>(c, 3);
  std::vector<std::vector<float>> da, db;
  a.visit([&](const std::string&, const Tensor<float>& t) { da.push_back(t.data); });
  b.visit([&](const std::string&, const Tensor<float>& t) { db.push_back(t.data); });
  CHECK(da == db);
  for (float v : a.layers[0].ln1_gamma.data) CHECK(v == 1.0f);
  for (float v : a.layers[0].bq.data) CHECK(v == 0.0f);
  double sq = 0;
  for (float v : a.layers[1].w1.data) sq += double(v) * v;
  CHECK(std::sqrt(sq / a.layers[1].w1.data.size()) == doctest::Approx(0.02).epsilon(0.1));
}

TEST_CASE("embed examples") {
  ModelConfig c = tiny_config();
  c.hidden = 4;
  c.n_heads = 2;
  c.vocab = 5;
  auto p = init_parameters<double>(c, 1);
  randomize(p, 2);
  const auto seq = make_seq({1, 4, 2}, {0, 2, 3}, {0, 1, 0});

  SUBCASE("zero lexical/entity tables give E_w + E_p exactly") {
    c.lexical = c.entity = true;
    std::fill(p.lex_emb.data.begin(), p.lex_emb.data.end(), 0.0);
    std::fill(p.ent_emb.data.begin(), p.ent_emb.data.end(), 0.0);
    ad::Tape<double> tape;
    const auto m = bind_const(tape, p);
    const auto& e = tape.value(embed(tape, m, seq, c));
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(e(t, j) == at(p.tok_emb, seq.ids[t], j) + at(p.pos_emb, t, j));
    }
  }
  SUBCASE("single token with one-hot rows is the literal four-row sum") {
    c.lexical = c.entity = true;
    for (auto* t : {&p.tok_emb, &p.pos_emb, &p.lex_emb, &p.ent_emb}) std::fill(t->data.begin(), t->data.end(), 0.0);
    p.tok_emb.data[3 * 4 + 0] = 1;
    p.pos_emb.data[0 * 4 + 1] = 1;
    p.lex_emb.data[2 * 4 + 2] = 1;
    p.ent_emb.data[1 * 4 + 3] = 1;
    p.ent_emb.data[1 * 4 + 0] = 1;
    ad::Tape<double> tape;
    const auto m = bind_const(tape, p);
    const auto& e = tape.value(embed(tape, m, make_seq({3}, {2}, {1}), c));
    CHECK(e.data == std::vector<double>{2, 1, 1, 1});
  }
  SUBCASE("disabled channels equal zero tables bit for bit") {
    auto on = c;
    on.lexical = on.entity = true;
    auto zeroed = p;
    std::fill(zeroed.lex_emb.data.begin(), zeroed.lex_emb.data.end(), 0.0);
    std::fill(zeroed.ent_emb.data.begin(), zeroed.ent_emb.data.end(), 0.0);
    CHECK(forward_logits(p, seq, c).data == forward_logits(zeroed, seq, on).data);
  }
  SUBCASE("out-of-range ids and tags are rejected") {
    c.lexical = true;
    ad::Tape<double> tape;
    const auto m = bind_const(tape, p);
    CHECK_THROWS_AS(embed(tape, m, make_seq({1, 5}), c), VocabError);
    CHECK_THROWS_AS(embed(tape, m, make_seq({1, 2}, {0, 4}), c), VocabError);
  }
}

TEST_CASE("attention_head examples") {
  ad::Tape<double> tape;
  const auto wq = tape.constant(random_matrix(3, 2, 1));
  const auto wk = tape.constant(random_matrix(3, 2, 2));
  const auto wv = tape.constant(random_matrix(3, 2, 3));

  SUBCASE("T = 1 returns v exactly") {
    const auto hin = random_matrix(1, 3, 4);
    const auto out = attention_head(tape, tape.constant(hin), wq, wk, wv, causal_mask(1));
    const auto v = lin({hin.data}, tape.value(wv), nullptr);
    CHECK(tape.value(out).data == v[0]);
  }
  SUBCASE("T = 2 matches the scalar formula and row 0 ignores the future") {
    const auto hin = random_matrix(2, 3, 5);
    const Mat x = {{hin.data[0], hin.data[1], hin.data[2]}, {hin.data[3], hin.data[4], hin.data[5]}};
    const auto q = lin(x, tape.value(wq), nullptr), k = lin(x, tape.value(wk), nullptr),
               v = lin(x, tape.value(wv), nullptr);
    const double s10 = (q[1][0] * k[0][0] + q[1][1] * k[0][1]) / std::sqrt(2.0);
    const double s11 = (q[1][0] * k[1][0] + q[1][1] * k[1][1]) / std::sqrt(2.0);
    const double a0 = std::exp(s10) / (std::exp(s10) + std::exp(s11)), a1 = 1 - a0;
    const auto& out = tape.value(attention_head(tape, tape.constant(hin), wq, wk, wv, causal_mask(2)));
    CHECK(std::abs(out(0, 0) - v[0][0]) <= 1e-12);
    CHECK(std::abs(out(0, 1) - v[0][1]) <= 1e-12);
    CHECK(std::abs(out(1, 0) - (a0 * v[0][0] + a1 * v[1][0])) <= 1e-12);
    CHECK(std::abs(out(1, 1) - (a0 * v[0][1] + a1 * v[1][1])) <= 1e-12);
  }
}

TEST_CASE("multi_head examples") {
  ad::Tape<double> tape;
  const auto hin = tape.constant(random_matrix(3, 4, 7));
  const auto mask = causal_mask(3);
  std::vector<HeadWeights> heads;
  for (std::uint64_t i = 0; i < 2; ++i) {
    heads.push_back({tape.constant(random_matrix(4, 2, 10 + i)), tape.constant(random_matrix(4, 2, 20 + i)),
                     tape.constant(random_matrix(4, 2, 30 + i))});
  }

  SUBCASE("one head with identity output map equals the head") {
    Tensor<double> eye({2, 2});
    eye.data = {1, 0, 0, 1};
    const auto one = multi_head(tape, hin, std::span(heads.data(), 1), tape.constant(eye), mask);
    const auto ref = attention_head(tape, hin, heads[0].wq, heads[0].wk, heads[0].wv, mask);
    CHECK(tape.value(one).data == tape.value(ref).data);
  }
  SUBCASE("one-hot output map routes head columns as constructed") {
    // out col 0 <- head1 col 1, col 1 <- head0 col 0, col 2 <- head0 col 1, col 3 <- head1 col 0
    Tensor<double> w({4, 4});
    w.data[0 * 4 + 1] = 1;
    w.data[1 * 4 + 2] = 1;
    w.data[2 * 4 + 3] = 1;
    w.data[3 * 4 + 0] = 1;
    const auto& out = tape.value(multi_head(tape, hin, heads, tape.constant(w), mask));
    const auto& h0 = tape.value(attention_head(tape, hin, heads[0].wq, heads[0].wk, heads[0].wv, mask));
    const auto& h1 = tape.value(attention_head(tape, hin, heads[1].wq, heads[1].wk, heads[1].wv, mask));
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(out(t, 0) == h1(t, 1));
      CHECK(out(t, 1) == h0(t, 0));
      CHECK(out(t, 2) == h0(t, 1));
      CHECK(out(t, 3) == h1(t, 0));
    }
  }
  SUBCASE("permuting heads with matching output rows leaves the output unchanged") {
    const auto w = random_matrix(4, 4, 40);
    Tensor<double> wp({4, 4});
    for (std::size_t j = 0; j < 4; ++j) {
      wp.data[0 * 4 + j] = w.data[2 * 4 + j];
      wp.data[1 * 4 + j] = w.data[3 * 4 + j];
      wp.data[2 * 4 + j] = w.data[0 * 4 + j];
      wp.data[3 * 4 + j] = w.data[1 * 4 + j];
    }
    std::vector<HeadWeights> swapped = {heads[1], heads[0]};
    const auto& a = tape.value(multi_head(tape, hin, heads, tape.constant(w), mask));
    const auto& b = tape.value(multi_head(tape, hin, swapped, tape.constant(wp), mask));
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-14));
  }
}

TEST_CASE("forward matches the straight-line oracle") {
  SUBCASE("tiny config L=1 h=1 H=2 V=3 T=2") {
    const auto c = tiny_config();
    auto p = init_parameters<double>(c, 1);
    randomize(p, 11);
    const auto seq = make_seq({1, 2});
    CHECK(max_abs_diff(forward_logits(p, seq, c), oracle_logits(p, seq, c)) <= 1e-10);
  }
  SUBCASE("two layers, two heads, both channels") {
    ModelConfig c;
    c.n_layers = 2;
    c.n_heads = 2;
    c.hidden = 6;
    c.vocab = 7;
    c.max_len = 8;
    c.lexical = c.entity = true;
    c.dropout = 0;
    auto p = init_parameters<double>(c, 2);
    randomize(p, 12);
    const auto seq = make_seq({1, 5, 6, 2}, {0, 1, 2, 3}, {1, 0, 1, 0});
    CHECK(max_abs_diff(forward_logits(p, seq, c), oracle_logits(p, seq, c)) <= 1e-10);
  }
}

TEST_CASE("forward is causal and deterministic") {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.hidden = 8;
  c.vocab = 11;
  c.max_len = 12;
  c.lexical = c.entity = true;
  const auto p = init_parameters<float>(c, 5);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + rng() % 10;
    std::vector<TokenId> ids(T);
    std::vector<std::int32_t> tags(T), flags(T);
    for (std::size_t i = 0; i < T; ++i) {
      ids[i] = static_cast<TokenId>(rng() % 11);
      tags[i] = static_cast<std::int32_t>(rng() % 4);
      flags[i] = static_cast<std::int32_t>(rng() % 2);
    }
    const auto a = make_seq(ids, tags, flags);
    auto b = a;
    const std::size_t t = 1 + rng() % (T - 1);
    b.ids[t] = static_cast<TokenId>((b.ids[t] + 1) % 11);
    b.lexical_tags[t] = (b.lexical_tags[t] + 1) % 4;
    const auto la = forward_logits(p, a, c), lb = forward_logits(p, b, c);
    CHECK(std::equal(la.data.begin(), la.data.begin() + static_cast<std::ptrdiff_t>(t * 11), lb.data.begin()));
    CHECK(la.data != lb.data);
    CHECK(forward_logits(p, a, c).data == la.data);
  }
  CHECK_THROWS_AS(forward_logits(p, make_seq(std::vector<TokenId>(13, 1)), c), DimensionError);
}

TEST_CASE("prefix prompts match the oracle and keep real-token causality") {
  auto c = tiny_config();
  c.hidden = 4;
  c.n_heads = 2;
  c.vocab = 5;
  auto p = init_parameters<double>(c, 1);
  randomize(p, 3);
  const auto seq = make_seq({1, 3, 4});

  PromptEmbeddings<double> zero{Tensor<double>({2, 4})};
  const auto with_zero = forward_logits(p, seq, c, &zero);
  CHECK(max_abs_diff(with_zero, oracle_logits(p, seq, c, &zero.matrix)) <= 1e-10);
  CHECK(with_zero.data != forward_logits(p, seq, c).data);

  PromptEmbeddings<double> learned{random_matrix(3, 4, 8)};
  const auto with_learned = forward_logits(p, seq, c, &learned);
  CHECK(with_learned.shape == Shape{3, 5});
  CHECK(max_abs_diff(with_learned, oracle_logits(p, seq, c, &learned.matrix)) <= 1e-10);

  auto changed = seq;
  changed.ids[2] = 2;
  const auto other = forward_logits(p, changed, c, &learned);
  CHECK(std::equal(with_learned.data.begin(), with_learned.data.begin() + 10, other.data.begin()));
}

TEST_CASE("lm_loss examples") {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.hidden = 4;
  c.vocab = 9;
  c.max_len = 8;
  c.dropout = 0;
  auto p = init_parameters<double>(c, 4);
  randomize(p, 6);
  const auto seq = make_seq({1, 4, 7, 8, 2});

  SUBCASE("all-zero LM head gives ln V") {
    auto z = p;
    std::fill(z.tok_emb.data.begin(), z.tok_emb.data.end(), 0.0);
    const std::vector<TokenSequence> batch{seq};
    CHECK(lm_loss(z, std::span(batch), c) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  }
  SUBCASE("one selected target equals its -log softmax probability") {
    auto s = seq;
    std::fill(s.loss_mask.begin(), s.loss_mask.end(), 0);
    s.loss_mask[3] = 1;
    const auto logits = oracle_logits(p, s, c);
    double z = 0;
    for (double v : logits[2]) z += std::exp(v);
    const double want = std::log(z) - logits[2][8];
    const std::vector<TokenSequence> batch{s};
    CHECK(std::abs(lm_loss(p, std::span(batch), c) - want) <= 1e-10);
  }
  SUBCASE("duplicated batch has the same loss") {
    const std::vector<TokenSequence> one{seq}, two{seq, seq};
    for (auto w : {LossWeighting::kToken, LossWeighting::kDialogue}) {
      CHECK(lm_loss(p, std::span(two), c, w) == doctest::Approx(lm_loss(p, std::span(one), c, w)).epsilon(1e-14));
    }
  }
  SUBCASE("token and dialogue weighting differ on unequal lengths") {
    const std::vector<TokenSequence> batch{seq, make_seq({1, 3})};
    const double a = lm_loss(p, std::vector<TokenSequence>{seq}, c);
    const double b = lm_loss(p, std::vector<TokenSequence>{make_seq({1, 3})}, c);
    CHECK(lm_loss(p, std::span(batch), c, LossWeighting::kToken) == doctest::Approx((4 * a + b) / 5));
    CHECK(lm_loss(p, std::span(batch), c, LossWeighting::kDialogue) == doctest::Approx((a + b) / 2));
  }
  SUBCASE("empty mask is an error") {
    auto s = seq;
    std::fill(s.loss_mask.begin(), s.loss_mask.end(), 0);
    const std::vector<TokenSequence> batch{s};
    CHECK_THROWS_AS(lm_loss(p, std::span(batch), c), EmptyLossError);
  }
}

TEST_CASE("end-to-end gradient agrees with finite differences") {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.hidden = 4;
  c.vocab = 6;
  c.max_len = 5;
  c.lexical = c.entity = true;
  c.dropout = 0;
  auto p = init_parameters<double>(c, 1);
  randomize(p, 21, 0.3);
  auto prompts = init_prompts<double>(2, 4, 3);
  for (auto& v : prompts.matrix.data) v *= 20;
  const std::vector<TokenSequence> batch{make_seq({1, 3, 5, 2}, {0, 1, 2, 3}, {0, 1, 1, 0}), make_seq({1, 4, 2})};

  std::vector<Tensor<double>*> all;
  p.visit([&](const std::string&, Tensor<double>& t) { all.push_back(&t); });
  all.push_back(&prompts.matrix);
  for (auto* t : all) {
    t->requires_grad = true;
    t->zero_grad();
  }
  ad::Tape<double> tape;
  const auto m = bind(tape, p, &prompts);
  tape.backward(batch_loss(tape, m, std::span(batch), c, LossWeighting::kToken));

  double worst = 0;
  for (auto* t : all) {
    const auto numeric =
        central_difference(t->data, [&] { return lm_loss(p, std::span(batch), c, LossWeighting::kToken, &prompts); });
    worst = std::max(worst, max_rel_err(*t->grad, numeric));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("generate examples") {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.hidden = 8;
  c.vocab = 10;
  c.max_len = 16;
  const auto p = init_parameters<float>(c, 2);
  const auto hist = make_seq({1, 4, 5});

  GenerateOptions none;
  none.max_new = 0;
  CHECK(generate(p, hist, c, none).empty());

  GenerateOptions greedy;
  greedy.max_new = 6;
  const auto g = generate(p, hist, c, greedy);
  CHECK(g == generate(p, hist, c, greedy));
  CHECK(g.size() <= 6);

  GenerateOptions topk;
  topk.strategy = GenerateOptions::Strategy::kTopK;
  topk.top_k = 4;
  topk.max_new = 10;
  topk.seed = 77;
  CHECK(generate(p, hist, c, topk) == generate(p, hist, c, topk));

  GenerateOptions longer;
  longer.max_new = 100;
  const auto capped = generate(p, hist, c, longer);
  CHECK(hist.size() + capped.size() <= c.max_len);

  CHECK_THROWS_AS(generate(p, make_seq(std::vector<TokenId>(16, 1)), c, greedy), DimensionError);
}
