// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cda/encoder.hpp"
#include "fixtures.hpp"
#include "grad_check.hpp"

namespace cda {
namespace {

using testing::check_gradients;
using testing::random_tensor;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Gru, SingleStepClosedForm) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 1, 1}, {0.7}));
  auto wx = tape.constant(Tensor<double>({3, 1}, {0.5, -0.3, 0.8}));
  auto wh = tape.constant(Tensor<double>({3, 1}, {0.1, 0.2, 0.3}));
  auto bx = tape.constant(Tensor<double>({3}, {0.05, 0.1, -0.2}));
  auto bh = tape.constant(Tensor<double>({3}, {0.01, -0.02, 0.4}));
  auto h = gru_sequence(x, Mask{1}, wx, wh, bx, bh, false);
  const double r = sig(0.5 * 0.7 + 0.05 + 0.01);
  const double z = sig(-0.3 * 0.7 + 0.1 - 0.02);
  const double n = std::tanh(0.8 * 0.7 - 0.2 + r * 0.4);
  EXPECT_NEAR(h.value()[0], (1 - z) * n, 1e-15);
}

TEST(Gru, TwoStepsCarryState) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({2, 1, 1}, {1.0, -1.0}));
  auto wx = tape.constant(Tensor<double>({3, 1}, {0.2, 0.4, 0.6}));
  auto wh = tape.constant(Tensor<double>({3, 1}, {-0.5, 0.3, 0.9}));
  auto bx = tape.constant(Tensor<double>({3}, {0.0, 0.0, 0.0}));
  auto bh = tape.constant(Tensor<double>({3}, {0.0, 0.0, 0.0}));
  auto h = gru_sequence(x, Mask{1, 1}, wx, wh, bx, bh, false);
  double hp = 0.0;
  for (double xt : {1.0, -1.0}) {
    const double r = sig(0.2 * xt - 0.5 * hp), z = sig(0.4 * xt + 0.3 * hp);
    const double n = std::tanh(0.6 * xt + r * 0.9 * hp);
    hp = (1 - z) * n + z * hp;
  }
  EXPECT_NEAR(h.value()[1], hp, 1e-15);
}

TEST(Gru, ReverseEqualsForwardOnReversedInput) {
  std::mt19937_64 rng(3);
  const std::size_t T = 5, N = 2, in = 3, h = 4;
  auto xv = random_tensor<double>({T, N, in}, rng);
  Tensor<double> xr({T, N, in});
  for (std::size_t t = 0; t < T; ++t)
    std::copy_n(xv.data.begin() + t * N * in, N * in, xr.data.begin() + (T - 1 - t) * N * in);
  Tape<double> tape;
  auto wx = tape.constant(random_tensor<double>({3 * h, in}, rng));
  auto wh = tape.constant(random_tensor<double>({3 * h, h}, rng));
  auto bx = tape.constant(random_tensor<double>({3 * h}, rng));
  auto bh = tape.constant(random_tensor<double>({3 * h}, rng));
  const Mask all(T * N, 1);
  auto back = gru_sequence(tape.constant(xv), all, wx, wh, bx, bh, true);
  auto fwd = gru_sequence(tape.constant(xr), all, wx, wh, bx, bh, false);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < N * h; ++j)
      EXPECT_EQ(back.value()[t * N * h + j], fwd.value()[(T - 1 - t) * N * h + j]);
}

TEST(Gru, PaddingMatchesShorterSequence) {
  std::mt19937_64 rng(5);
  const std::size_t in = 2, h = 3;
  auto x = random_tensor<double>({4, 1, in}, rng);
  Tensor<double> shortx({2, 1, in});
  std::copy_n(x.data.begin(), 2 * in, shortx.data.begin());
  Tape<double> tape;
  auto wx = tape.constant(random_tensor<double>({3 * h, in}, rng));
  auto wh = tape.constant(random_tensor<double>({3 * h, h}, rng));
  auto bx = tape.constant(random_tensor<double>({3 * h}, rng));
  auto bh = tape.constant(random_tensor<double>({3 * h}, rng));
  for (bool reverse : {false, true}) {
    auto padded = gru_sequence(tape.constant(x), Mask{1, 1, 0, 0}, wx, wh, bx, bh, reverse);
    auto plain = gru_sequence(tape.constant(shortx), Mask{1, 1}, wx, wh, bx, bh, reverse);
    for (std::size_t i = 0; i < 2 * h; ++i) EXPECT_EQ(padded.value()[i], plain.value()[i]);
    for (std::size_t i = 2 * h; i < 4 * h; ++i) EXPECT_EQ(padded.value()[i], 0.0);
  }
}

TEST(AttentionPool, WeightsAreADistributionOverRealSteps) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + rng() % 6, N = 1 + rng() % 4, D = 3, A = 2;
    Mask mask(T * N, 0);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t len = 1 + rng() % T;
      for (std::size_t t = 0; t < len; ++t) mask[t * N + n] = 1;
    }
    Tape<double> tape;
    auto p = attention_pool(tape.constant(random_tensor<double>({T, N, D}, rng, -3, 3)), mask,
                            tape.constant(random_tensor<double>({A, D}, rng)),
                            tape.constant(random_tensor<double>({A}, rng)),
                            tape.constant(random_tensor<double>({A}, rng, -5, 5)));
    for (std::size_t n = 0; n < N; ++n) {
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask[t * N + n]) EXPECT_EQ(p.alpha[t * N + n], 0.0);
        s += p.alpha[t * N + n];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(AttentionPool, IdenticalRowsPoolToThatRow) {
  Tape<double> tape;
  Tensor<double> x({3, 1, 2}, {0.3, -0.4, 0.3, -0.4, 0.3, -0.4});
  std::mt19937_64 rng(1);
  auto p = attention_pool(tape.constant(x), Mask{1, 1, 1}, tape.constant(random_tensor<double>({2, 2}, rng)),
                          tape.constant(random_tensor<double>({2}, rng)),
                          tape.constant(random_tensor<double>({2}, rng)));
  EXPECT_NEAR(p.out.value()[0], 0.3, 1e-15);
  EXPECT_NEAR(p.out.value()[1], -0.4, 1e-15);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(p.alpha[t], 1.0 / 3.0, 1e-15);
}

TEST(CrossAttend, ClosedFormTwoKeys) {
  Tape<double> tape;
  auto q = tape.constant(Tensor<double>({1, 2}, {1.0, 0.0}));
  auto k = tape.constant(Tensor<double>({2, 1, 2}, {1.0, 0.0, -1.0, 0.0}));
  auto a = cross_attend(q, k, Mask{1, 1});
  const double w0 = std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
  EXPECT_NEAR(a.weights[0], w0, 1e-15);
  EXPECT_NEAR(a.out.value()[0], w0 - (1 - w0), 1e-15);
}

TEST(CrossAttend, MaskedKeysGetZeroWeight) {
  std::mt19937_64 rng(2);
  Tape<double> tape;
  auto q = tape.constant(random_tensor<double>({3, 2, 4}, rng));
  auto k = tape.constant(random_tensor<double>({5, 2, 4}, rng));
  Mask m(10, 1);
  m[3 * 2 + 1] = m[4 * 2 + 1] = 0;
  auto a = cross_attend(q, k, m);
  for (std::size_t qi = 0; qi < 3; ++qi)
    for (std::size_t n = 0; n < 2; ++n) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += a.weights[(qi * 5 + j) * 2 + n];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  EXPECT_EQ(a.weights[(0 * 5 + 3) * 2 + 1], 0.0);
  EXPECT_EQ(a.weights[(2 * 5 + 4) * 2 + 1], 0.0);
}

TEST(MaskedMean, AveragesRealRows) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({3, 1, 1}, {1.0, 2.0, 100.0}));
  EXPECT_DOUBLE_EQ(masked_mean(x, Mask{1, 1, 0}).value()[0], 1.5);
}

TEST(Embedding, OutOfRangeIdIsRejected) {
  Tape<double> tape;
  auto table = tape.constant(Tensor<double>({2, 1}, {0.0, 1.0}));
  EXPECT_THROW(embedding_lookup(table, {2}, {1}, Mask{1}), std::out_of_range);
}

class FusedGradients : public ::testing::TestWithParam<int> {};

TEST_P(FusedGradients, MatchCentralDifferences) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  const std::size_t T = 4, N = 3, V = 6, E = 3, H = 2, D = 2 * H, K = 5;
  auto param = [&](const char* name, Shape s, double scale = 0.8) {
    Parameter<double> p;
    p.name = name;
    p.value = random_tensor<double>(std::move(s), rng, -scale, scale);
    p.zero_grad();
    return p;
  };
  auto table = param("table", {V, E});
  auto wx = param("wx", {3 * H, E}), wh = param("wh", {3 * H, H});
  auto bx = param("bx", {3 * H}), bh = param("bh", {3 * H});
  auto wx2 = param("wx2", {3 * H, E}), wh2 = param("wh2", {3 * H, H});
  auto bx2 = param("bx2", {3 * H}), bh2 = param("bh2", {3 * H});
  auto aw = param("attn.w", {D, D}), ab = param("attn.b", {D}), au = param("attn.u", {D});
  auto keys = param("keys", {K, N, D});
  auto queries = param("queries", {2, N, D});
  auto probe1 = random_tensor<double>({N, D}, rng);
  auto probe2 = random_tensor<double>({2, N, D}, rng);
  auto probe3 = random_tensor<double>({N, D}, rng);
  std::vector<std::int32_t> ids(T * N);
  for (auto& v : ids) v = static_cast<std::int32_t>(rng() % V);
  Mask mask(T * N, 0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < 1 + (n + GetParam()) % T; ++t) mask[t * N + n] = 1;
  Mask kmask(K * N, 1);
  kmask[(K - 1) * N] = 0;

  auto build = [&](Tape<double>& tp) {
    auto emb = embedding_lookup(tp.param(table), ids, {T, N}, mask);
    auto f = gru_sequence(emb, mask, tp.param(wx), tp.param(wh), tp.param(bx), tp.param(bh), false);
    auto b = gru_sequence(emb, mask, tp.param(wx2), tp.param(wh2), tp.param(bx2), tp.param(bh2), true);
    auto tok = concat(f, b);
    auto pooled = attention_pool(tok, mask, tp.param(aw), tp.param(ab), tp.param(au));
    auto doc_q = cross_attend(pooled.out, tp.param(keys), kmask);
    auto sent_q = cross_attend(tp.param(queries), tp.param(keys), kmask);
    auto mean = masked_mean(tok, mask);
    auto loss = add(add(sum(mul(doc_q.out, tp.constant(probe1))), sum(mul(sent_q.out, tp.constant(probe2)))),
                    sum(mul(mean, tp.constant(probe3))));
    return loss;
  };
  auto res = check_gradients({&table, &wx, &wh, &bx, &bh, &wx2, &wh2, &bx2, &bh2, &aw, &ab, &au, &keys, &queries},
                             build, 1e-4);
  EXPECT_LT(res.worst_rel_error, 1e-4) << res.worst_param;
}

INSTANTIATE_TEST_SUITE_P(RandomSeeds, FusedGradients, ::testing::Range(1, 11));

TEST(Encoder, ShapesOfEveryLevel) {
  std::mt19937_64 rng(4);
  auto cfg = testing::tiny_config();
  Model<double> model(cfg);
  std::vector<Document> docs;
  for (int i = 0; i < 3; ++i) docs.push_back(testing::random_document(rng, "d" + std::to_string(i), 12, 4, 5));
  std::vector<const Document*> ptrs{&docs[0], &docs[1], &docs[2]};
  auto batch = pad_documents(ptrs, cfg);
  Tape<double> tape(false);
  auto enc = encode_documents(tape, model, batch);
  const std::size_t D = 2 * cfg.hidden;
  EXPECT_EQ(enc.tokens->shape(), (Shape{batch.steps * batch.sents, 3, D}));
  EXPECT_EQ(enc.sent_pre.shape(), (Shape{batch.sents, 3, D}));
  EXPECT_EQ(enc.sent_ctx.shape(), (Shape{batch.sents, 3, D}));
  EXPECT_EQ(enc.doc.shape(), (Shape{3, D}));
  EXPECT_EQ(enc.sent_alpha.shape, (Shape{batch.sents, 3}));
  EXPECT_FALSE(enc.doc_tilde);
}

TEST(Encoder, PaddingDoesNotChangeAnyDocument) {
  for (auto kind : {EncoderKind::gru, EncoderKind::precomputed, EncoderKind::precomputed_avg}) {
    std::mt19937_64 rng(11);
    auto cfg = testing::tiny_config();
    cfg.encoder = kind;
    cfg.input_dim = 5;
    if (kind == EncoderKind::precomputed_avg) cfg.input_dim = 4;
    Model<double> model(cfg);
    std::vector<PairExample> pairs;
    for (int i = 0; i < 6; ++i) pairs.push_back(testing::random_pair(rng, "p" + std::to_string(i), 12, 5, 6));
    auto store = testing::random_store(rng, pairs, cfg.input_dim);
    std::vector<const Document*> all;
    for (const auto& p : pairs) all.push_back(&p.doc_a);
    Tape<double> tape(false);
    auto batched = encode_documents(tape, model, pad_documents(all, cfg, &store));
    for (std::size_t n = 0; n < all.size(); ++n) {
      const Document* one[] = {all[n]};
      auto single = encode_documents(tape, model, pad_documents(one, cfg, &store));
      auto a = extract_document(batched, n), b = extract_document(single, 0);
      ASSERT_EQ(a.sent_ctx.size(), b.sent_ctx.size());
      for (std::size_t j = 0; j < a.doc.size(); ++j) EXPECT_NEAR(a.doc[j], b.doc[j], 1e-6);
      for (std::size_t s = 0; s < a.sent_ctx.size(); ++s)
        for (std::size_t j = 0; j < a.sent_ctx[s].size(); ++j) EXPECT_NEAR(a.sent_ctx[s][j], b.sent_ctx[s][j], 1e-6);
    }
  }
}

TEST(Encoder, SameSeedSameModel) {
  auto cfg = testing::tiny_config();
  Model<float> a(cfg), b(cfg);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  cfg.seed = 2;
  Model<float> c(cfg);
  EXPECT_NE(a.param("word_gru.fwd.wx").value, c.param("word_gru.fwd.wx").value);
}

TEST(Encoder, GruEncoderNeedsIndexedDocuments) {
  auto cfg = testing::tiny_config();
  Document d = make_document("x", {"hello world ."});
  const Document* one[] = {&d};
  EXPECT_THROW(pad_documents(one, cfg), DataError);
}

}  // namespace
}  // namespace cda
