// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "kdepth/model/encoder.hpp"
#include "kdepth/nn/conv_block.hpp"
#include "kdepth/nn/lam.hpp"
#include "kdepth/nn/transformer.hpp"
#include "test_util.hpp"

namespace kdepth {
namespace {

using testing::expect_gradcheck;
using testing::max_abs;
using testing::param;
using testing::scalarize;
using testing::weights_of;

TEST(LgConv, ZeroGammaIsLocalConvBitwise) {
  Rng rng(1);
  nn::Conv2d local(3, 8, 3, 1, false, rng);
  nn::LgConv lg(local, {.heads = 4, .gamma0 = 0.0}, rng);
  Tensor x = randn({2, 3, 8, 8}, rng);
  for (bool train : {false, true}) {
    EXPECT_TRUE(bitwise_equal(lg.forward(x, train), local.forward(x))) << "train=" << train;
  }
  Tensor single = randn({3, 8, 8}, rng);
  EXPECT_TRUE(bitwise_equal(lg.forward(single, false), local.forward(single)));
}

TEST(LgConv, DefaultGammaPerturbsLessThanOnePercent) {
  Rng rng(2);
  for (int stride : {1, 2}) {
    nn::Conv2d local(4, 16, 3, stride, false, rng);
    nn::LgConv lg(local, {}, rng);
    Tensor x = randn({2, 4, 16, 16}, rng);
    const Tensor base = local.forward(x);
    for (bool train : {false, true}) {
      const double rel = max_abs_diff(lg.forward(x, train), base) / (max_abs(base) + 1e-8);
      EXPECT_LT(rel, 0.01) << "stride=" << stride << " train=" << train;
      EXPECT_GT(rel, 0.0);
    }
  }
}

TEST(LgConv, AttentionAndGateInvariants) {
  Rng rng(3);
  nn::LgConv lg(nn::Conv2d(3, 8, 3, 2, false, rng), {}, rng);
  Tensor x = randn({2, 3, 10, 12}, rng, 3.0);
  nn::LgConvTrace trace;
  const Tensor y = lg.forward(x, false, &trace);
  EXPECT_EQ(y.shape(), trace.local.shape());
  EXPECT_EQ(y.shape(), (Shape{2, 8, 5, 6}));
  ASSERT_EQ(trace.attention.shape(), (Shape{2, 4, 30}));
  const Tensor rows = sum(trace.attention, 2, false);
  for (double r : rows.to_vector()) EXPECT_NEAR(r, 1.0, 1e-6);
  for (double g : trace.gate.to_vector()) {
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
}

TEST(LgConv, RejectsIndivisibleHeads) {
  Rng rng(4);
  EXPECT_THROW(nn::LgConv(nn::Conv2d(3, 3, 3, 1, false, rng), {.heads = 4}, rng), ConfigError);
}

TEST(LgConv, Gradcheck) {
  DefaultDTypeGuard f64(DType::f64);
  Rng rng(5);
  nn::LgConv lg(nn::Conv2d(3, 4, 3, 1, true, rng), {.heads = 4, .gamma0 = 0.7}, rng);
  Tensor x = param({2, 3, 5, 5}, rng);
  auto params = weights_of(lg);
  params.emplace_back("x", x);
  expect_gradcheck([&] { return scalarize(lg.forward(x, true)); }, params);
  expect_gradcheck([&] { return scalarize(lg.forward(x, false)); }, params);
}

TEST(Wrap, AddsParametersAndKeepsLocalWeights) {
  Rng rng(6);
  model::CnnEncoder enc({8, 16, 16, 32}, rng);
  nn::ParameterStore before;
  before.collect(enc, "enc");
  const auto count_before = before.weight_count();
  std::vector<std::pair<std::string, Tensor>> locals;
  for (const auto& e : before.entries()) {
    if (e.name.find(".local.") != std::string::npos) locals.emplace_back(e.name, e.tensor.clone());
  }

  Rng wrap_rng(7);
  EXPECT_EQ(nn::wrap_backbone_with_lgconv(enc, {}, wrap_rng), 9);
  EXPECT_EQ(nn::wrap_backbone_with_lgconv(enc, {}, wrap_rng), 0);

  nn::ParameterStore after;
  after.collect(enc, "enc");
  EXPECT_GT(after.weight_count(), count_before);
  for (const auto& [name, t] : locals) {
    const auto* e = after.find(name);
    ASSERT_NE(e, nullptr) << name;
    EXPECT_TRUE(bitwise_equal(e->tensor, t)) << name;
  }
}

TEST(Wrap, ZeroGammaReproducesBackboneBitwise) {
  // Twin encoders from one seed; training passes update running stats, so both
  // see the same sequence of calls.
  Rng rng(8);
  model::CnnEncoder plain({8, 16, 16, 32}, rng);
  Rng rng2(8);
  model::CnnEncoder wrapped({8, 16, 16, 32}, rng2);
  Rng wrap_rng(9);
  nn::wrap_backbone_with_lgconv(wrapped, {.heads = 4, .gamma0 = 0.0}, wrap_rng);
  Tensor x = rand_uniform({2, 3, 64, 64}, rng, 0.0, 1.0);
  for (bool train : {false, true, false}) {
    const auto ref = plain.forward(x, train);
    const auto out = wrapped.forward(x, train);
    for (std::size_t l = 0; l < 4; ++l) {
      EXPECT_TRUE(bitwise_equal(out[l], ref[l])) << "stage " << l + 1 << " train=" << train;
    }
  }
}

TEST(Wrap, OnlyThreeByThree) {
  Rng rng(10);
  nn::ConvBnRelu pointwise(4, 4, 1, 1, rng);
  EXPECT_FALSE(pointwise.wrap_lgconv({}, rng));
  EXPECT_FALSE(pointwise.is_lgconv());
  nn::ConvBnRelu block(4, 8, 3, 1, rng);
  EXPECT_TRUE(block.wrap_lgconv({}, rng));
  EXPECT_TRUE(block.is_lgconv());
  EXPECT_FALSE(block.wrap_lgconv({}, rng));
}

TEST(ConvBnRelu, EvalIsDeterministicAndTrainUpdatesStats) {
  Rng rng(11);
  nn::ConvBnRelu block(3, 4, 3, 1, rng);
  Tensor x = randn({2, 3, 6, 6}, rng);
  EXPECT_TRUE(bitwise_equal(block.forward(x, false), block.forward(x, false)));
  const Tensor rm = block.bn.running_mean.clone();
  block.forward(x, true);
  EXPECT_FALSE(bitwise_equal(rm, block.bn.running_mean));
  EXPECT_TRUE(bitwise_equal(block.forward(x, false), block.forward(x, false)));
}

TEST(ConvBnRelu, Gradcheck) {
  DefaultDTypeGuard f64(DType::f64);
  Rng rng(12);
  nn::ConvBnRelu block(2, 3, 3, 2, rng, false);
  Tensor x = param({3, 2, 6, 6}, rng);
  auto params = weights_of(block);
  params.emplace_back("x", x);
  expect_gradcheck([&] { return scalarize(block.forward(x, true)); }, params);
}

TEST(Transformer, ZeroedProjectionsAreIdentity) {
  Rng rng(13);
  nn::TransformerBlock block(16, 4, 2, rng);
  block.zero_output_projections();
  Tensor tokens = randn({2, 9, 16}, rng);
  EXPECT_TRUE(bitwise_equal(block.forward(tokens), tokens));
  Tensor map = randn({2, 16, 3, 4}, rng);
  EXPECT_TRUE(bitwise_equal(block.forward_map(map), map));
}

TEST(Transformer, AttentionRowsSumToOne) {
  Rng rng(14);
  nn::TransformerBlock block(8, 2, 2, rng);
  Tensor tokens = randn({3, 7, 8}, rng, 4.0);
  Tensor att;
  const Tensor y = block.forward(tokens, &att);
  EXPECT_EQ(y.shape(), tokens.shape());
  ASSERT_EQ(att.shape(), (Shape{6, 7, 7}));
  for (double r : sum(att, 2, false).to_vector()) EXPECT_NEAR(r, 1.0, 1e-6);
}

TEST(Transformer, DimensionErrors) {
  Rng rng(15);
  EXPECT_THROW(nn::TransformerBlock(10, 4, 2, rng), ConfigError);
  nn::TransformerBlock block(8, 2, 2, rng);
  EXPECT_THROW(block.forward(Tensor::zeros({2, 5, 6})), ShapeError);
}

TEST(Transformer, Gradcheck) {
  DefaultDTypeGuard f64(DType::f64);
  Rng rng(16);
  nn::TransformerBlock block(8, 2, 2, rng);
  Tensor tokens = param({2, 5, 8}, rng);
  auto params = weights_of(block);
  params.emplace_back("tokens", tokens);
  expect_gradcheck([&] { return scalarize(block.forward(tokens)); }, params);
}

TEST(Lam, ConstantInputGivesUniformScores) {
  Rng rng(17);
  nn::Lam lam(6, rng);
  lam.query.w.copy_data_from(randn(lam.query.w.shape(), rng));
  Tensor channel = randn({1, 6, 1, 1}, rng);
  Tensor f = mul(Tensor::ones({1, 6, 4, 5}), channel);
  const auto out = lam.forward(f);
  for (double a : out.scores.to_vector()) EXPECT_NEAR(a, 1.0, 1e-6);
}

TEST(Lam, ScoresSumToPixelCountAndWeightFeature) {
  Rng rng(18);
  nn::Lam lam(8, rng);
  lam.query.w.copy_data_from(randn(lam.query.w.shape(), rng));
  Tensor f = randn({3, 8, 5, 7}, rng, 2.0);
  const auto out = lam.forward(f);
  ASSERT_EQ(out.scores.shape(), (Shape{3, 1, 5, 7}));
  const auto per_image = sum(reshape(out.scores, {3, 35}), 1, false).to_vector();
  for (double s : per_image) EXPECT_NEAR(s, 35.0, 1e-4);
  for (double a : out.scores.to_vector()) EXPECT_GE(a, 0.0);
  EXPECT_LT(max_abs_diff(out.weighted, mul(f, out.scores)), 1e-12);
  bool varied = false;
  for (double a : out.scores.to_vector()) varied = varied || std::abs(a - 1.0) > 1e-3;
  EXPECT_TRUE(varied);
}

TEST(Lam, ZeroQueryStartsUniform) {
  Rng rng(19);
  nn::Lam lam(4, rng);
  const auto out = lam.forward(randn({2, 4, 3, 3}, rng));
  for (double a : out.scores.to_vector()) EXPECT_DOUBLE_EQ(a, 1.0);
  EXPECT_THROW(lam.forward(Tensor::zeros({2, 5, 3, 3})), ShapeError);
}

TEST(Lam, Gradcheck) {
  DefaultDTypeGuard f64(DType::f64);
  Rng rng(20);
  nn::Lam lam(4, rng);
  lam.query.w.copy_data_from(randn(lam.query.w.shape(), rng));
  Tensor f = param({2, 4, 3, 3}, rng);
  auto params = weights_of(lam);
  params.emplace_back("f", f);
  expect_gradcheck(
      [&] {
        const auto out = lam.forward(f);
        return add(scalarize(out.weighted), scalarize(out.scores, 7));
      },
      params);
}

}  // namespace
}  // namespace kdepth
