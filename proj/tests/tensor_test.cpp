// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kdepth/tensor/dtns.hpp"
#include "kdepth/tensor/gradcheck.hpp"
#include "kdepth/tensor/ops.hpp"
#include "kdepth/tensor/rng.hpp"
#include "kdepth/tensor/tape.hpp"

namespace kdepth {
namespace {

constexpr double kTol = 1e-4;

// Random-weighted sum, so that every output element gets a distinct upstream gradient.
Tensor scalarize(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = rand_uniform(y.shape(), rng, -1.0, 1.0, y.dtype());
  return sum(mul(y, w));
}

Tensor param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = rand_uniform(std::move(shape), rng, lo, hi, DType::f64);
  t.set_requires_grad(true);
  return t;
}

void expect_gradcheck(const std::function<Tensor()>& f, const NamedTensors& params) {
  const auto report = gradcheck(f, params);
  EXPECT_TRUE(report.passed(kTol)) << report.summary();
}

TEST(Matmul, IdentityAndHandCase) {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1}, DType::f64);
  EXPECT_TRUE(bitwise_equal(matmul(eye, eye), eye));
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, DType::f64);
  Tensor b = Tensor::from({2, 1}, {1, 1}, DType::f64);
  Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c.at(0), 3.0);
  EXPECT_DOUBLE_EQ(c.at(1), 7.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradOfSumIsOnesTimesBTransposed) {
  Rng rng(1);
  Tensor a = param({3, 4}, rng);
  Tensor b = param({4, 2}, rng);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(matmul(a, b));
  }
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 4; ++k) {
      EXPECT_NEAR(a.grad().at(i * 4 + k), b.at(k * 2) + b.at(k * 2 + 1), 1e-12);
    }
  }
  expect_gradcheck([&] { return scalarize(matmul(a, b)); }, {{"a", a}, {"b", b}});
}

TEST(Matmul, BatchedGradcheck) {
  Rng rng(2);
  Tensor a = param({2, 3, 4}, rng);
  Tensor b = param({2, 4, 5}, rng);
  Tensor w = param({4, 5}, rng);
  expect_gradcheck([&] { return scalarize(matmul(a, b)); }, {{"a", a}, {"b", b}});
  expect_gradcheck([&] { return scalarize(matmul(a, w)); }, {{"a", a}, {"w", w}});
}

TEST(Conv2d, OnesKernelCenterIsNine) {
  Tensor x = Tensor::ones({1, 3, 3}, DType::f64);
  Tensor w = Tensor::ones({1, 1, 3, 3}, DType::f64);
  Tensor y = conv2d(x, w, Tensor(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3}));
  EXPECT_DOUBLE_EQ(y.at(4), 9.0);
  EXPECT_DOUBLE_EQ(y.at(0), 4.0);
}

TEST(Conv2d, DiracKernelIsIdentity) {
  Rng rng(3);
  Tensor x = rand_uniform({2, 3, 6, 5}, rng, -1, 1, DType::f32);
  for (int k : {1, 3, 5}) {
    Tensor w = Tensor::zeros({3, 3, k, k}, DType::f32);
    for (int c = 0; c < 3; ++c) w.set(((c * 3 + c) * k + k / 2) * k + k / 2, 1.0);
    EXPECT_TRUE(bitwise_equal(conv2d(x, w, Tensor(), 1, (k - 1) / 2), x)) << "k=" << k;
  }
}

TEST(Conv2d, OutputSizeAndErrors) {
  Tensor x = Tensor::zeros({1, 2, 9, 7});
  Tensor w = Tensor::zeros({4, 2, 3, 3});
  EXPECT_EQ(conv2d(x, w, Tensor(), 2, 1).shape(), (Shape{1, 4, 5, 4}));
  EXPECT_THROW(conv2d(x, w, Tensor(), 0, 1), ParameterError);
  EXPECT_THROW(conv2d(x, w, Tensor(), 1, -1), ParameterError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({4, 2, 2, 2}), Tensor(), 1, 0), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({4, 3, 3, 3}), Tensor(), 1, 1), ShapeError);
}

TEST(Conv2d, Gradcheck) {
  Rng rng(4);
  Tensor x = param({2, 4, 5}, rng);
  Tensor w = param({3, 2, 3, 3}, rng);
  Tensor b = param({3}, rng);
  expect_gradcheck([&] { return scalarize(conv2d(x, w, b, 1, 1)); }, {{"x", x}, {"w", w}, {"b", b}});
  Tensor xb = param({2, 2, 7, 6}, rng);
  expect_gradcheck([&] { return scalarize(conv2d(xb, w, b, 2, 1)); }, {{"x", xb}, {"w", w}, {"b", b}});
  Tensor w1 = param({3, 2, 1, 1}, rng);
  expect_gradcheck([&] { return scalarize(conv2d(xb, w1, Tensor(), 1, 0)); }, {{"x", xb}, {"w", w1}});
}

TEST(AvgPool, MeanAndUniformBackward) {
  Tensor c = Tensor::full({2, 3, 4}, 1.5, DType::f64);
  Tensor pc = avgpool_global(c);
  ASSERT_EQ(pc.shape(), (Shape{2, 1, 1}));
  EXPECT_DOUBLE_EQ(pc.at(0), 1.5);
  Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4}, DType::f64);
  EXPECT_DOUBLE_EQ(avgpool_global(x).item(), 2.5);

  x.set_requires_grad(true);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(avgpool_global(x));
  }
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad().at(i), 0.25);

  Rng rng(5);
  Tensor y = param({2, 3, 4, 5}, rng);
  expect_gradcheck([&] { return scalarize(avgpool_global(y)); }, {{"y", y}});
}

TEST(Softmax, ClosedForms) {
  Tensor u = Tensor::full({5}, 0.3, DType::f64);
  Tensor s = softmax(u, 0);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(s.at(i), 0.2, 1e-15);
  Tensor x = Tensor::from({2}, {0.0, std::log(3.0)}, DType::f64);
  Tensor p = softmax(x, 0);
  EXPECT_NEAR(p.at(0), 0.25, 1e-15);
  EXPECT_NEAR(p.at(1), 0.75, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndNormalization) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = rand_uniform({3, 7, 4}, rng, -30, 30, DType::f32);
    for (int axis : {0, 1, 2, -1}) {
      Tensor s = softmax(x, axis);
      Tensor s2 = softmax(add_scalar(x, 17.25), axis);
      EXPECT_LT(max_abs_diff(s, s2), 1e-6);
      Tensor total = sum(s, axis, false);
      for (std::int64_t i = 0; i < total.numel(); ++i) EXPECT_NEAR(total.at(i), 1.0, 1e-6);
    }
  }
  Tensor big = Tensor::from({3}, {1000.0, 1000.0, -1000.0}, DType::f32);
  Tensor sb = softmax(big, 0);
  EXPECT_NEAR(sb.at(0), 0.5, 1e-6);
  EXPECT_TRUE(std::isfinite(sb.at(2)));
}

TEST(Softmax, Gradcheck) {
  Rng rng(7);
  Tensor x = param({3, 4, 5}, rng);
  for (int axis : {0, 1, 2}) expect_gradcheck([&] { return scalarize(softmax(x, axis)); }, {{"x", x}});
}

TEST(Elementwise, HandCases) {
  Tensor x = Tensor::from({2}, {-1.0, 2.0}, DType::f64);
  Tensor r = relu(x);
  EXPECT_EQ(r.at(0), 0.0);
  EXPECT_EQ(r.at(1), 2.0);
  Tensor q = Tensor::from({2, 2}, {1, 2, 3, 4}, DType::f64);
  Tensor up = upsample_nearest(q, 2);
  ASSERT_EQ(up.shape(), (Shape{4, 4}));
  const double expected[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (int i = 0; i < 16; ++i) EXPECT_EQ(up.at(i), expected[i]);
  EXPECT_NEAR(sigmoid(Tensor::scalar(0.0, DType::f64)).item(), 0.5, 0.0);
  EXPECT_DOUBLE_EQ(sum_sq(q).item(), 30.0);
  EXPECT_DOUBLE_EQ(mean(q).item(), 2.5);
  Tensor cat = concat({q, q}, 0);
  EXPECT_EQ(cat.shape(), (Shape{4, 2}));
  EXPECT_EQ(cat.at(5), 2.0);
}

TEST(Elementwise, DomainErrors) {
  EXPECT_THROW(log(Tensor::from({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor::from({1}, {-2.0})), DomainError);
  EXPECT_THROW(sqrt(Tensor::from({1}, {-1e-9})), DomainError);
  EXPECT_NO_THROW(sqrt(Tensor::from({1}, {0.0})));
}

TEST(Elementwise, Gradchecks) {
  Rng rng(8);
  Tensor a = param({3, 4}, rng);
  Tensor b = param({3, 4}, rng);
  Tensor row = param({4}, rng);
  Tensor pos = param({3, 4}, rng, 0.5, 2.0);
  expect_gradcheck([&] { return scalarize(add(a, row)); }, {{"a", a}, {"row", row}});
  expect_gradcheck([&] { return scalarize(sub(a, b)); }, {{"a", a}, {"b", b}});
  expect_gradcheck([&] { return scalarize(mul(a, row)); }, {{"a", a}, {"row", row}});
  expect_gradcheck([&] { return scalarize(div(a, pos)); }, {{"a", a}, {"pos", pos}});
  expect_gradcheck([&] { return scalarize(sigmoid(a)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(gelu(a)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(exp(a)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(log(pos)); }, {{"pos", pos}});
  expect_gradcheck([&] { return scalarize(sqrt(pos)); }, {{"pos", pos}});
  expect_gradcheck([&] { return scalarize(square(a)); }, {{"a", a}});
  expect_gradcheck([&] { return sum_sq(a); }, {{"a", a}});
  expect_gradcheck([&] { return mean(mul(a, b)); }, {{"a", a}, {"b", b}});
  expect_gradcheck([&] { return scalarize(mean(a, 1, true)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(sum(a, 0, false)); }, {{"a", a}});
  // relu is checked away from its kink.
  Tensor away = param({3, 4}, rng, 0.1, 1.0);
  for (int i = 0; i < 6; ++i) away.set(i, -away.at(i));
  expect_gradcheck([&] { return scalarize(relu(away)); }, {{"away", away}});
}

TEST(Shape, Gradchecks) {
  Rng rng(9);
  Tensor a = param({2, 3, 4}, rng);
  Tensor b = param({2, 2, 4}, rng);
  expect_gradcheck([&] { return scalarize(concat({a, b}, 1)); }, {{"a", a}, {"b", b}});
  expect_gradcheck([&] { return scalarize(permute(a, {2, 0, 1})); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(reshape(a, {6, 4})); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(slice(a, 2, 1, 3)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(upsample_nearest(a, 2)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(resize_nearest(a, 5, 2)); }, {{"a", a}});
  expect_gradcheck([&] { return scalarize(flip_width(a)); }, {{"a", a}});
}

TEST(Norm, BatchNormGradcheckAndModes) {
  Rng rng(10);
  Tensor x = param({3, 2, 3, 3}, rng);
  Tensor g = param({2}, rng, 0.5, 1.5);
  Tensor b = param({2}, rng);
  Tensor rm = Tensor::zeros({2}, DType::f64);
  Tensor rv = Tensor::ones({2}, DType::f64);
  expect_gradcheck([&] { return scalarize(batch_norm(x, g, b, rm.clone(), rv.clone(), true, 0.1, 1e-5)); },
                   {{"x", x}, {"gamma", g}, {"beta", b}});
  expect_gradcheck([&] { return scalarize(batch_norm(x, g, b, rm, rv, false, 0.1, 1e-5)); },
                   {{"x", x}, {"gamma", g}, {"beta", b}});

  Tensor y = batch_norm(x, g, b, rm, rv, true, 0.1, 1e-5);
  EXPECT_NE(rm.at(0), 0.0);
  Tensor e1 = batch_norm(x, g, b, rm, rv, false, 0.1, 1e-5);
  Tensor e2 = batch_norm(x, g, b, rm, rv, false, 0.1, 1e-5);
  EXPECT_TRUE(bitwise_equal(e1, e2));
  EXPECT_THROW(batch_norm(x, g, b, rm, rv, false, 0.1, 0.0), ParameterError);
}

TEST(Norm, LayerNormGradcheck) {
  Rng rng(11);
  Tensor x = param({4, 6}, rng);
  Tensor g = param({6}, rng, 0.5, 1.5);
  Tensor b = param({6}, rng);
  expect_gradcheck([&] { return scalarize(layer_norm(x, g, b, 1e-5)); }, {{"x", x}, {"gamma", g}, {"beta", b}});
}

TEST(Tape, FanOutAccumulates) {
  Rng rng(12);
  Tensor x = param({5}, rng, 0.2, 1.0);
  auto f = [&] { return add(sum(square(x)), sum(log(x))); };
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f();
  }
  tape.backward(loss);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(x.grad().at(i), 2 * x.at(i) + 1 / x.at(i), 1e-12);
  x.zero_grad();
  expect_gradcheck(f, {{"x", x}});
  // Same tensor used twice in one op.
  expect_gradcheck([&] { return sum(mul(x, x)); }, {{"x", x}});
}

TEST(Tape, NoGradScopeRecordsNothing) {
  Tensor x = Tensor::ones({3}).set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope ng;
    sum(square(x));
  }
  EXPECT_EQ(tape.size(), 0u);
  sum(square(x));
  EXPECT_EQ(tape.size(), 2u);
}

TEST(Gradcheck, SumOfSquaresExact) {
  Rng rng(13);
  Tensor x = param({7}, rng);
  const auto report = gradcheck([&] { return sum_sq(x); }, {{"x", x}});
  EXPECT_LT(report.max_rel_error(), 1e-8);
}

TEST(Gradcheck, NonFiniteLossAborts) {
  Tensor x = Tensor::from({1}, {1.0}, DType::f64).set_requires_grad(true);
  EXPECT_THROW(gradcheck([&] { return div(x, Tensor::from({1}, {0.0}, DType::f64)); }, {{"x", x}}), DivergenceError);
}

TEST(Gradcheck, DetectsWrongGradient) {
  Rng rng(14);
  Tensor x = param({4}, rng);
  // detach() hides the dependence from the tape, so analytic and numeric disagree.
  const auto report = gradcheck([&] { return add(sum(x), sum_sq(x.detach())); }, {{"x", x}});
  EXPECT_FALSE(report.passed(kTol));
  EXPECT_EQ(report.worst().name, "x");
}

TEST(Rng, DeterministicAndSplittable) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42);
  Rng s1 = c.split(1), s1b = c.split(1), s2 = c.split(2);
  EXPECT_EQ(s1.next_u64(), s1b.next_u64());
  EXPECT_NE(Rng(42).split(1).next_u64(), s2.next_u64());
  Rng r(7);
  double lo = 1, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    EXPECT_LT(r.below(5), 5u);
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  Rng g1(3), g2(3);
  EXPECT_TRUE(bitwise_equal(randn({4, 5}, g1), randn({4, 5}, g2)));
}

TEST(Determinism, RepeatedTrainingStepsBitwise) {
  auto run = [] {
    Rng rng(21);
    Tensor x = rand_uniform({4, 3, 8, 8}, rng, 0, 1, DType::f32);
    Tensor w = randn({5, 3, 3, 3}, rng, 0.2, DType::f32).set_requires_grad(true);
    for (int step = 0; step < 5; ++step) {
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = mean(square(relu(conv2d(x, w, Tensor(), 1, 1))));
      }
      tape.backward(loss);
      auto wd = w.data<float>();
      auto gd = w.grad().data<float>();
      for (std::size_t i = 0; i < wd.size(); ++i) wd[i] -= 0.1f * gd[i];
      w.zero_grad();
    }
    return w.detach();
  };
  EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(Dtns, RoundTripBitExact) {
  Rng rng(15);
  for (DType dt : {DType::f32, DType::f64}) {
    Tensor t = randn({2, 3, 4}, rng, 1.0, dt);
    t.set(0, -0.0);
    t.set(1, 1e-310);
    std::stringstream ss;
    write_dtns(ss, t);
    Tensor back = read_dtns(ss, "mem");
    EXPECT_TRUE(bitwise_equal(t, back));
  }
  Tensor s = Tensor::scalar(3.5, DType::f64);
  std::stringstream ss;
  write_dtns(ss, s);
  EXPECT_TRUE(bitwise_equal(read_dtns(ss, "mem"), s));
}

TEST(Dtns, CorruptInputRejected) {
  std::stringstream bad("XXXX\x01\x00\x00\x00");
  EXPECT_THROW(read_dtns(bad, "bad"), FormatError);
  Tensor t = Tensor::ones({8}, DType::f32);
  std::stringstream ss;
  write_dtns(ss, t);
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  try {
    read_dtns(truncated, "file.dtns");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("file.dtns"), std::string::npos);
  }
}

}  // namespace
}  // namespace kdepth
