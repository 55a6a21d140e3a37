// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "kdepth/loss/losses.hpp"
#include "kdepth/model/depth_net.hpp"
#include "test_util.hpp"

namespace kdepth {
namespace {

using model::BinHeadsConfig;
using model::DepthNet;
using model::DepthNetConfig;
using testing::expect_gradcheck;
using testing::param;
using testing::scalarize;
using testing::weights_of;

DepthNetConfig small_student() {
  DepthNetConfig c;
  c.widths = {8, 16, 16, 32};
  c.features = 16;
  c.bins.bins = 8;
  return c;
}

DepthNetConfig small_teacher() {
  DepthNetConfig c;
  c.encoder = "transformer";
  c.widths = {16, 16, 32, 32};
  c.blocks_per_stage = 1;
  c.heads = 2;
  c.features = 16;
  c.bins.bins = 8;
  return c;
}

void expect_pyramid(const model::Pyramid& p, const model::Widths& w, std::int64_t n, std::int64_t size) {
  for (std::size_t l = 0; l < 4; ++l) {
    const std::int64_t s = size >> (l + 2);
    EXPECT_EQ(p[l].shape(), (Shape{n, w[l], s, s})) << "stage " << l + 1;
  }
}

TEST(Encoder, PyramidContractForBothFamilies) {
  Rng rng(1);
  Tensor x = rand_uniform({2, 3, 64, 64}, rng, 0.0, 1.0);
  for (const auto& cfg : {small_student(), small_teacher()}) {
    DepthNet net(cfg, Rng(2));
    const auto p = net.encode(x, false);
    expect_pyramid(p, cfg.widths, 2, 64);
    EXPECT_EQ(p[0].dim(2), 16);
    EXPECT_EQ(p[3].dim(2), 2);
  }
  DepthNetConfig lg = small_student();
  lg.lg = true;
  expect_pyramid(DepthNet(lg, Rng(2)).encode(x, true), lg.widths, 2, 64);
}

TEST(Encoder, RejectsIndivisibleInputBeforeCompute) {
  DepthNet net(small_student(), Rng(3));
  reset_forward_macs();
  EXPECT_THROW(net.forward(Tensor::zeros({1, 3, 48, 64}), false), ShapeError);
  EXPECT_THROW(net.forward(Tensor::zeros({1, 3, 64, 40}), false), ShapeError);
  EXPECT_THROW(net.forward(Tensor::zeros({1, 1, 64, 64}), false), ShapeError);
  EXPECT_EQ(forward_macs(), 0);
}

TEST(Encoder, DeterministicUnderSeed) {
  Rng rng(4);
  Tensor x = rand_uniform({1, 3, 32, 32}, rng, 0.0, 1.0);
  for (const auto& cfg : {small_student(), small_teacher()}) {
    DepthNet a(cfg, Rng(5));
    DepthNet b(cfg, Rng(5));
    EXPECT_EQ(nn::block_checksum(a), nn::block_checksum(b));
    EXPECT_TRUE(bitwise_equal(a.forward(x, false).pred.depth, b.forward(x, false).pred.depth));
    DepthNet c(cfg, Rng(6));
    EXPECT_NE(nn::block_checksum(a), nn::block_checksum(c));
  }
}

TEST(Encoder, UnknownFamilyIsConfigError) {
  DepthNetConfig cfg = small_student();
  cfg.encoder = "resnet";
  EXPECT_THROW(DepthNet(cfg, Rng(1)), ConfigError);
}

TEST(Decoder, OutputAtStrideFourAndUsesSkip) {
  Rng rng(7);
  const model::Widths w{8, 16, 16, 32};
  model::Decoder dec(w, 12, rng);
  EXPECT_EQ(dec.expected_widths(), w);
  model::Pyramid p;
  for (std::size_t l = 0; l < 4; ++l) p[l] = randn({2, w[l], 16 >> l, 16 >> l}, rng);
  const Tensor y = dec.forward(p);
  EXPECT_EQ(y.shape(), (Shape{2, 12, 16, 16}));
  model::Pyramid zeroed = p;
  zeroed[0] = Tensor::zeros(p[0].shape());
  EXPECT_GT(max_abs_diff(dec.forward(zeroed), y), 1e-6);
}

TEST(Decoder, ChannelMismatchNamesStage) {
  Rng rng(8);
  model::Decoder dec({8, 16, 16, 32}, 12, rng);
  model::Pyramid p{Tensor::zeros({1, 8, 8, 8}), Tensor::zeros({1, 16, 4, 4}), Tensor::zeros({1, 15, 2, 2}),
                   Tensor::zeros({1, 32, 1, 1})};
  try {
    dec.forward(p);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 3"), std::string::npos) << e.what();
  }
}

TEST(Decoder, Gradcheck) {
  DefaultDTypeGuard f64(DType::f64);
  Rng rng(9);
  const model::Widths w{3, 4, 4, 5};
  model::Decoder dec(w, 4, rng);
  model::Pyramid p;
  NamedTensors params = weights_of(dec);
  for (std::size_t l = 0; l < 4; ++l) {
    p[l] = param({2, w[l], 8 >> l, 8 >> l}, rng);
    params.emplace_back("F" + std::to_string(l + 1), p[l]);
  }
  expect_gradcheck([&] { return scalarize(dec.forward(p)); }, params);
}

TEST(BinHeads, Gradcheck) {
  DefaultDTypeGuard f64(DType::f64);
  Rng rng(10);
  model::BinHeads heads(4, {.bins = 5, .d_min = 0.25, .d_max = 10.0, .eps = 1e-3}, rng);
  for (Tensor* b : {&heads.center_fc1.b, &heads.center_fc2.b}) {
    b->copy_data_from(rand_uniform(b->shape(), rng, 0.2, 0.5));
  }
  Tensor f = param({2, 4, 3, 3}, rng);
  auto params = weights_of(heads);
  params.emplace_back("features", f);
  expect_gradcheck(
      [&] {
        const auto out = heads.forward(f);
        return add(scalarize(out.depth), scalarize(out.centers, 5));
      },
      params);
}

TEST(Bins, HandCase) {
  // relu(l) + eps proportional to (0.25, 0.25, 0.5) with eps folded in.
  const double eps = 1e-3;
  Tensor logits = Tensor::from({3}, {1.0 - eps, 1.0 - eps, 2.0 - eps}, DType::f64);
  const auto [w, c] = model::bins_from_logits(logits, 1.0, 9.0, eps);
  const auto wv = w.to_vector(), cv = c.to_vector();
  EXPECT_NEAR(wv[0], 0.25, 1e-12);
  EXPECT_NEAR(wv[2], 0.5, 1e-12);
  EXPECT_NEAR(cv[0], 2.0, 1e-12);
  EXPECT_NEAR(cv[1], 4.0, 1e-12);
  EXPECT_NEAR(cv[2], 7.0, 1e-12);
}

TEST(Bins, EqualLogitsGiveUniformWidths) {
  for (double v : {-3.0, 0.0, 2.5}) {
    const auto [w, c] = model::bins_from_logits(Tensor::full({6}, v, DType::f64), 0.25, 10.0);
    for (double x : w.to_vector()) EXPECT_NEAR(x, 1.0 / 6.0, 1e-12);
  }
  EXPECT_THROW(model::bins_from_logits(Tensor::zeros({1}), 0.0, 1.0), ShapeError);
}

TEST(Bins, DepthHandCases) {
  Tensor c = Tensor::from({1, 3}, {2.0, 4.0, 7.0}, DType::f64);
  Tensor p = Tensor::from({1, 3, 1, 1}, {0.5, 0.5, 0.0}, DType::f64);
  const Tensor d = model::depth_from_bins(p, c, 4);
  ASSERT_EQ(d.shape(), (Shape{1, 1, 4, 4}));
  for (double v : d.to_vector()) EXPECT_DOUBLE_EQ(v, 3.0);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> one_hot(3, 0.0);
    one_hot[static_cast<std::size_t>(i)] = 1.0;
    const Tensor di = model::depth_from_bins(Tensor::from({1, 3, 1, 1}, one_hot, DType::f64), c, 1);
    EXPECT_EQ(di.item(), c.at(i));
  }
}

TEST(Bins, PropertiesOverRandomLogits) {
  // 1000 draws of logits and probability maps at assorted scales.
  const BinHeadsConfig cfg;
  Rng rng(11);
  for (int draw = 0; draw < 1000; ++draw) {
    const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
    Tensor logits = randn({1, cfg.bins}, rng, scale);
    const auto [w, c] = model::bins_from_logits(logits, cfg.d_min, cfg.d_max, cfg.eps);
    const auto wv = w.to_vector(), cv = c.to_vector();
    double total = 0;
    for (double x : wv) {
      EXPECT_GT(x, 0.0);
      total += x;
    }
    ASSERT_NEAR(total, 1.0, 1e-5) << "draw " << draw;
    ASSERT_GT(cv.front(), cfg.d_min);
    ASSERT_LT(cv.back(), cfg.d_max);
    for (std::size_t i = 1; i < cv.size(); ++i) ASSERT_GT(cv[i], cv[i - 1]) << "draw " << draw;

    Tensor probs = softmax(randn({1, cfg.bins, 2, 3}, rng, scale), 1);
    for (double s : sum(probs, 1, false).to_vector()) ASSERT_NEAR(s, 1.0, 1e-5);
    const Tensor d = model::depth_from_bins(probs, c, 1);
    for (double v : d.to_vector()) {
      ASSERT_GE(v, cv.front() - 1e-9);
      ASSERT_LE(v, cv.back() + 1e-9);
      ASSERT_GT(v, cfg.d_min);
      ASSERT_LT(v, cfg.d_max);
    }
  }
}

TEST(DepthNet, FingerprintDistinguishesArchitectures) {
  DepthNetConfig a = small_student();
  DepthNetConfig b = a;
  b.lg = true;
  DepthNetConfig c = a;
  c.bins.bins = 16;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  EXPECT_EQ(a.fingerprint(), small_student().fingerprint());
}

TEST(DepthNet, ParameterNamesAreHierarchical) {
  DepthNetConfig cfg = small_student();
  cfg.lg = true;
  DepthNet net(cfg, Rng(1));
  nn::ParameterStore store;
  store.collect(net, "student");
  EXPECT_NE(store.find("student.enc.stage2.conv1.local.w"), nullptr);
  EXPECT_NE(store.find("student.enc.stage2.conv1.global.bn.gamma"), nullptr);
  EXPECT_NE(store.find("student.dec.heads.prob.w"), nullptr);
}

struct AcclimationFixture {
  DepthNetConfig student_cfg = small_student();
  DepthNetConfig teacher_cfg = small_teacher();
  DepthNet student{student_cfg, Rng(20)};
  DepthNet teacher{teacher_cfg, Rng(21)};
  Rng rng{22};
  model::AcclimatedTeacher acc{teacher_cfg.widths, student_cfg, {}, rng};
  Tensor x;
  Tensor gt;
  Tensor mask;

  AcclimationFixture() {
    Rng data(23);
    x = rand_uniform({2, 3, 32, 32}, data, 0.0, 1.0);
    gt = rand_uniform({2, 1, 32, 32}, data, 1.0, 5.0);
    mask = Tensor::ones({2, 1, 32, 32});
    nn::set_requires_grad(teacher, false);
  }
};

TEST(Acclimated, AdaptedShapesMatchStudentAndFamStartsAsIdentity) {
  AcclimationFixture f;
  model::Pyramid tf;
  {
    NoGradScope ng;
    tf = f.teacher.encode(f.x, false);
  }
  f.acc.sync_ghost(f.student.decoder, 0);
  const auto out = f.acc.forward(tf, 0);
  const auto sf = f.student.encode(f.x, false);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(out.target[l].shape(), sf[l].shape()) << "stage " << l + 1;
    EXPECT_TRUE(bitwise_equal(f.acc.fam[l].forward_map(tf[l]), tf[l]));
    for (double a : out.scores[l].to_vector()) EXPECT_DOUBLE_EQ(a, 1.0);
  }
  EXPECT_EQ(out.pred.depth.shape(), (Shape{2, 1, 32, 32}));
}

TEST(Acclimated, StaleGhostIsProtocolError) {
  AcclimationFixture f;
  const auto tf = f.teacher.encode(f.x, false);
  EXPECT_THROW(f.acc.forward(tf, 0), ProtocolError);
  f.acc.sync_ghost(f.student.decoder, 4);
  EXPECT_NO_THROW(f.acc.forward(tf, 4));
  EXPECT_THROW(f.acc.forward(tf, 5), ProtocolError);
}

TEST(Acclimated, GhostCopyIsBitwiseAndGradientsStayOnAcclimationSide) {
  AcclimationFixture f;
  f.acc.sync_ghost(f.student.decoder, 0);
  EXPECT_EQ(nn::block_checksum(f.acc.ghost), nn::block_checksum(f.student.decoder));
  const auto teacher_sum = nn::block_checksum(f.teacher);

  nn::ParameterStore acc_store;
  acc_store.collect(f.acc, "acc");
  acc_store.zero_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    model::Pyramid tf;
    {
      NoGradScope ng;
      tf = f.teacher.encode(f.x, false);
    }
    loss = loss::silog(f.acc.forward(tf, 0).pred.depth, f.gt, f.mask);
  }
  tape.backward(loss);

  bool fam_or_adapter_moved = false;
  for (const auto& e : acc_store.entries()) {
    if (e.kind != nn::ParamKind::weight) continue;
    const bool ghost = e.name.starts_with("acc.ghost.");
    if (ghost) {
      EXPECT_TRUE(!e.tensor.has_grad() || testing::max_abs(e.tensor.grad()) == 0.0) << e.name;
    } else if (e.tensor.has_grad() && testing::max_abs(e.tensor.grad()) > 0.0) {
      fam_or_adapter_moved = true;
    }
  }
  EXPECT_TRUE(fam_or_adapter_moved);
  nn::ParameterStore teacher_store;
  teacher_store.collect(f.teacher, "t");
  for (const auto& e : teacher_store.entries()) {
    EXPECT_TRUE(!e.tensor.has_grad() || testing::max_abs(e.tensor.grad()) == 0.0) << e.name;
  }
  EXPECT_EQ(nn::block_checksum(f.teacher), teacher_sum);
}

TEST(Acclimated, WithoutLamScoresAreOnes) {
  DepthNetConfig s = small_student();
  Rng rng(30);
  model::AcclimatedTeacher acc(small_teacher().widths, s, {.fam = false, .lam = false}, rng);
  nn::ParameterStore store;
  store.collect(acc, "");
  for (const auto& e : store.entries()) {
    EXPECT_FALSE(e.name.starts_with("fam")) << e.name;
    EXPECT_FALSE(e.name.starts_with("lam")) << e.name;
  }
  model::Pyramid tf;
  Rng frng(31);
  for (std::size_t l = 0; l < 4; ++l) tf[l] = randn({1, small_teacher().widths[l], 8 >> l, 8 >> l}, frng);
  const auto out = acc.forward_unchecked(tf);
  for (std::size_t l = 0; l < 4; ++l) {
    for (double a : out.scores[l].to_vector()) EXPECT_EQ(a, 1.0);
  }
}

}  // namespace
}  // namespace kdepth
