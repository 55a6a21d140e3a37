// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "kdepth/loss/losses.hpp"
#include "test_util.hpp"

namespace kdepth {
namespace {

using loss::LossConfig;
using testing::expect_gradcheck;
using testing::param;

Tensor f64(Shape shape, std::initializer_list<double> values) { return Tensor::from(std::move(shape), values, DType::f64); }

TEST(Silog, HandCase) {
  const double e = std::exp(1.0);
  Tensor pred = f64({2}, {e, e * e});
  Tensor gt = f64({2}, {1, 1});
  const double v = loss::silog(pred, gt, Tensor::ones({2}, DType::f64)).item();
  EXPECT_NEAR(v, 10.0 * std::sqrt(0.5875), 1e-12);
  EXPECT_NEAR(v, 7.66485, 1e-4);
}

TEST(Silog, PerfectPredictionIsZeroWithZeroGradient) {
  Tensor gt = f64({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor pred = gt.clone().set_requires_grad(true);
  Tape tape;
  Tensor l;
  {
    TapeScope scope(tape);
    l = loss::silog(pred, gt, Tensor::ones(gt.shape(), DType::f64));
  }
  EXPECT_EQ(l.item(), 0.0);
  tape.backward(l);
  for (double g : pred.grad().to_vector()) EXPECT_EQ(g, 0.0);
}

TEST(Silog, CommonRescaleInvariance) {
  Rng rng(1);
  DefaultDTypeGuard guard(DType::f64);
  Tensor pred = rand_uniform({2, 1, 4, 4}, rng, 0.5, 8.0);
  Tensor gt = rand_uniform({2, 1, 4, 4}, rng, 0.5, 8.0);
  Tensor mask = Tensor::ones(gt.shape());
  const double base = loss::silog(pred, gt, mask).item();
  // Powers of two scale exactly, so g is unchanged bit for bit.
  for (double k : {0.25, 2.0, 8.0}) {
    EXPECT_EQ(loss::silog(mul_scalar(pred, k), mul_scalar(gt, k), mask).item(), base) << "k=" << k;
  }
  for (double k : {0.37, 3.3, 11.0}) {
    EXPECT_NEAR(loss::silog(mul_scalar(pred, k), mul_scalar(gt, k), mask).item(), base, 1e-12 * base) << "k=" << k;
  }
}

TEST(Silog, MaskSelectsPixels) {
  Tensor pred = f64({4}, {2, 3, 100, 0.0});
  Tensor gt = f64({4}, {1, 1, 0.0, 7});
  Tensor mask = f64({4}, {1, 1, 0, 0});
  const double v = loss::silog(pred, gt, mask).item();
  const double g1 = std::log(2.0), g2 = std::log(3.0);
  const double expected = 10 * std::sqrt((g1 * g1 + g2 * g2) / 2 - 0.85 * std::pow((g1 + g2) / 2, 2));
  EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Silog, Errors) {
  Tensor ones = Tensor::ones({3}, DType::f64);
  EXPECT_THROW(loss::silog(ones, ones, Tensor::zeros({3}, DType::f64)), DomainError);
  EXPECT_THROW(loss::silog(ones, f64({3}, {1, -1, 1}), ones), DomainError);
  EXPECT_THROW(loss::silog(ones, Tensor::ones({4}, DType::f64), Tensor::ones({4}, DType::f64)), ShapeError);
  LossConfig bad;
  bad.beta = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.lambda_kd = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_NO_THROW(LossConfig{}.validate());
}

TEST(Silog, RadicandNonNegativeForRandomBatches) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Tensor pred = rand_uniform({8}, rng, 0.01, 10.0, DType::f64);
    Tensor gt = rand_uniform({8}, rng, 0.25, 10.0, DType::f64);
    for (double beta : {0.0, 0.5, 0.85, 1.0}) {
      LossConfig cfg;
      cfg.beta = beta;
      EXPECT_GE(loss::silog(pred, gt, Tensor::ones({8}, DType::f64), cfg).item(), 0.0);
    }
  }
}

TEST(Silog, ClampsPredictionsBeforeLog) {
  Tensor pred = f64({2}, {0.0, -3.0});
  Tensor gt = f64({2}, {1.0, 2.0});
  const double v = loss::silog(pred, gt, Tensor::ones({2}, DType::f64)).item();
  EXPECT_TRUE(std::isfinite(v));
}

TEST(Silog, Gradcheck) {
  Rng rng(3);
  Tensor pred = param({2, 1, 4, 4}, rng, 0.3, 6.0);
  Tensor gt = rand_uniform({2, 1, 4, 4}, rng, 0.3, 6.0, DType::f64);
  Tensor mask = Tensor::from(gt.shape(), std::vector<double>(32, 1.0), DType::f64);
  mask.set(3, 0.0);
  mask.set(17, 0.0);
  expect_gradcheck([&] { return loss::silog(pred, gt, mask); }, {{"pred", pred}});
}

TEST(AttentiveKd, HandCase) {
  Tensor fs = f64({1, 1, 2, 2}, {1, 1, 5, 2});
  Tensor ft = Tensor::zeros({1, 1, 2, 2}, DType::f64);
  Tensor a = f64({1, 1, 2, 2}, {1, 2, 0, 1});
  const std::array<Tensor, 1> s{fs}, t{ft}, att{a};
  EXPECT_NEAR(loss::attentive_kd(s, t, att).item(), 2.25, 1e-9);
}

TEST(AttentiveKd, ZeroCasesAndNormalization) {
  Rng rng(4);
  DefaultDTypeGuard guard(DType::f64);
  std::array<Tensor, 2> fs{randn({2, 3, 4, 4}, rng), randn({2, 5, 2, 2}, rng)};
  std::array<Tensor, 2> ft{randn({2, 3, 4, 4}, rng), randn({2, 5, 2, 2}, rng)};
  std::array<Tensor, 2> ones{Tensor::ones({2, 1, 4, 4}), Tensor::ones({2, 1, 2, 2})};
  std::array<Tensor, 2> zeros{Tensor::zeros({2, 1, 4, 4}), Tensor::zeros({2, 1, 2, 2})};
  EXPECT_EQ(loss::attentive_kd(fs, fs, ones).item(), 0.0);
  EXPECT_EQ(loss::attentive_kd(fs, ft, zeros).item(), 0.0);
  // A = 1 reduces to the mean squared difference over all elements of all stages.
  double sq = 0, n = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto a = fs[l].to_vector(), b = ft[l].to_vector();
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    n += static_cast<double>(a.size());
  }
  const double v = loss::attentive_kd(fs, ft, ones).item();
  EXPECT_NEAR(v, sq / n, 1e-12);
  EXPECT_GT(v, 0.0);
}

TEST(AttentiveKd, ShapeMismatchNamesStage) {
  std::array<Tensor, 2> fs{Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 2, 2, 2})};
  std::array<Tensor, 2> ft{Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 2, 2})};
  std::array<Tensor, 2> a{Tensor::ones({1, 1, 4, 4}), Tensor::ones({1, 1, 2, 2})};
  try {
    loss::attentive_kd(fs, ft, a);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 2"), std::string::npos) << e.what();
  }
  std::array<Tensor, 2> bad_a{Tensor::ones({1, 1, 4, 4}), Tensor::ones({1, 1, 3, 3})};
  EXPECT_THROW(loss::attentive_kd(fs, fs, bad_a), ShapeError);
}

TEST(AttentiveKd, Gradcheck) {
  Rng rng(5);
  Tensor fs1 = param({2, 3, 4, 4}, rng), fs2 = param({2, 4, 2, 2}, rng);
  Tensor ft1 = param({2, 3, 4, 4}, rng), ft2 = param({2, 4, 2, 2}, rng);
  Tensor a1 = param({2, 1, 4, 4}, rng, 0.0, 2.0), a2 = param({2, 1, 2, 2}, rng, 0.0, 2.0);
  expect_gradcheck(
      [&] {
        return loss::attentive_kd(std::array<Tensor, 2>{fs1, fs2}, std::array<Tensor, 2>{ft1, ft2},
                                  std::array<Tensor, 2>{a1, a2});
      },
      {{"fs1", fs1}, {"fs2", fs2}, {"ft1", ft1}, {"ft2", ft2}, {"a1", a1}, {"a2", a2}});
}

TEST(TotalLoss, WarmupGatesKdBitwise) {
  Rng rng(6);
  DefaultDTypeGuard guard(DType::f64);
  Tensor base = rand_uniform({1, 1, 4, 4}, rng, 1.0, 3.0);
  Tensor gt = rand_uniform({1, 1, 4, 4}, rng, 1.0, 3.0);
  Tensor mask = Tensor::ones(gt.shape());
  Tensor fs = randn({1, 2, 4, 4}, rng);
  Tensor ft = randn({1, 2, 4, 4}, rng);
  Tensor a = Tensor::ones({1, 1, 4, 4});

  auto grads = [&](bool use_kd, bool warmup, double lambda) {
    Tensor pred = base.clone().set_requires_grad(true);
    Tensor feat = fs.clone().set_requires_grad(true);
    LossConfig cfg;
    cfg.lambda_kd = lambda;
    Tape tape;
    loss::Objectives o;
    {
      TapeScope scope(tape);
      Tensor kd;
      if (use_kd) kd = loss::attentive_kd(std::array<Tensor, 1>{mul(feat, pred)}, std::array<Tensor, 1>{ft},
                                          std::array<Tensor, 1>{a});
      o = loss::total_loss(pred, Tensor(), gt, mask, kd, warmup, cfg);
    }
    tape.backward(o.student);
    return std::make_pair(pred.grad().clone(), o.kd_value);
  };
  const auto [plain, none] = grads(false, false, 0.05);
  const auto [gated, logged] = grads(true, true, 0.05);
  const auto [zero_lambda, unused] = grads(true, false, 0.0);
  const auto [active, kd] = grads(true, false, 0.05);
  EXPECT_TRUE(bitwise_equal(gated, plain));
  EXPECT_TRUE(bitwise_equal(zero_lambda, plain));
  EXPECT_FALSE(bitwise_equal(active, plain));
  EXPECT_GT(logged, 0.0);
  EXPECT_EQ(logged, kd);
}

TEST(Evaluate, PerfectPrediction) {
  Tensor d = f64({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto r = loss::evaluate(d, d, Tensor::ones(d.shape(), DType::f64));
  EXPECT_EQ(r.abs_rel, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.log10, 0.0);
  EXPECT_EQ(r.delta1, 1.0);
  EXPECT_EQ(r.delta3, 1.0);
  EXPECT_EQ(r.n_valid, 4);
}

TEST(Evaluate, SinglePixelHandCase) {
  const auto r = loss::evaluate(f64({1}, {2}), f64({1}, {1}), f64({1}, {1}));
  EXPECT_DOUBLE_EQ(r.abs_rel, 1.0);
  EXPECT_DOUBLE_EQ(r.sq_rel, 1.0);
  EXPECT_DOUBLE_EQ(r.rmse, 1.0);
  EXPECT_DOUBLE_EQ(r.log10, std::log10(2.0));
  EXPECT_EQ(r.delta1, 0.0);
  EXPECT_EQ(r.delta2, 0.0);
  EXPECT_EQ(r.delta3, 0.0);
}

TEST(Evaluate, PermutationInvariantAndOrderedDeltas) {
  Rng rng(7);
  Tensor pred = rand_uniform({64}, rng, 0.3, 9.0, DType::f64);
  Tensor gt = rand_uniform({64}, rng, 0.3, 9.0, DType::f64);
  Tensor mask = Tensor::ones({64}, DType::f64);
  const auto r = loss::evaluate(pred, gt, mask);
  EXPECT_LE(r.delta1, r.delta2);
  EXPECT_LE(r.delta2, r.delta3);
  auto p = pred.to_vector(), g = gt.to_vector();
  std::reverse(p.begin(), p.end());
  std::reverse(g.begin(), g.end());
  const auto q = loss::evaluate(Tensor::from({64}, p, DType::f64), Tensor::from({64}, g, DType::f64), mask);
  EXPECT_NEAR(q.abs_rel, r.abs_rel, 1e-12);
  EXPECT_NEAR(q.rmse, r.rmse, 1e-12);
  EXPECT_EQ(q.delta1, r.delta1);
  EXPECT_THROW(loss::evaluate(pred, gt, Tensor::zeros({64}, DType::f64)), DomainError);
}

TEST(Evaluate, AccumulatorPoolsPixels) {
  Rng rng(8);
  Tensor pred = rand_uniform({2, 1, 4, 4}, rng, 0.3, 9.0, DType::f64);
  Tensor gt = rand_uniform({2, 1, 4, 4}, rng, 0.3, 9.0, DType::f64);
  Tensor mask = Tensor::ones(gt.shape(), DType::f64);
  loss::MetricAccumulator acc;
  acc.add(slice(pred, 0, 0, 1), slice(gt, 0, 0, 1), slice(mask, 0, 0, 1));
  acc.add(slice(pred, 0, 1, 2), slice(gt, 0, 1, 2), slice(mask, 0, 1, 2));
  const auto pooled = acc.report();
  const auto whole = loss::evaluate(pred, gt, mask);
  EXPECT_NEAR(pooled.rmse, whole.rmse, 1e-12);
  EXPECT_EQ(pooled.n_valid, 32);
}

TEST(MetricReport, JsonHasExactlyTheMetricKeys) {
  loss::MetricReport r;
  r.abs_rel = 0.1;
  r.rmse = 0.3;
  r.n_valid = 12;
  const auto j = nlohmann::json::parse(r.to_json());
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"abs_rel", "delta1", "delta2", "delta3", "log10", "n_valid", "rmse",
                                            "sq_rel"}));
  const auto back = loss::MetricReport::from_json(r.to_json());
  EXPECT_EQ(back.rmse, 0.3);
  EXPECT_EQ(back.n_valid, 12);
  EXPECT_EQ(back.to_json(), r.to_json());
}

}  // namespace
}  // namespace kdepth
