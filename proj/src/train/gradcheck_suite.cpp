// SPDX-License-Identifier: Apache-2.0
#include "kdepth/train/gradcheck_suite.hpp"

#include <chrono>
#include <functional>
#include <map>

#include "kdepth/loss/losses.hpp"
#include "kdepth/model/decoder.hpp"
#include "kdepth/nn/conv_block.hpp"
#include "kdepth/nn/lam.hpp"
#include "kdepth/nn/lgconv.hpp"
#include "kdepth/nn/transformer.hpp"
#include "kdepth/tensor/ops.hpp"

namespace kdepth::train {
namespace {

Tensor input(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = rand_uniform(std::move(shape), rng, lo, hi, DType::f64);
  t.set_requires_grad(true);
  return t;
}

// Random-weighted sum so every output element sees a distinct upstream gradient.
Tensor scalarize(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, rand_uniform(y.shape(), rng, -1.0, 1.0, y.dtype())));
}

template <class Block>
NamedTensors weights_of(Block& block) {
  NamedTensors out;
  block.visit("", [&](const std::string& name, Tensor& t, nn::ParamKind kind) {
    if (kind == nn::ParamKind::weight) out.emplace_back(name, t);
  });
  return out;
}

GradcheckReport merge(std::vector<GradcheckReport> parts, const std::vector<std::string>& tags) {
  GradcheckReport r;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (auto& e : parts[i].entries) {
      e.name = tags[i] + ":" + e.name;
      r.entries.push_back(std::move(e));
    }
  }
  return r;
}

GradcheckReport check_conv2d() {
  Rng rng(4);
  Tensor x = input({2, 2, 5, 5}, rng), w = input({3, 2, 3, 3}, rng), b = input({3}, rng);
  Tensor xs = input({2, 2, 7, 6}, rng);
  return merge({gradcheck([&] { return scalarize(conv2d(x, w, b, 1, 1)); }, {{"x", x}, {"w", w}, {"b", b}}),
                gradcheck([&] { return scalarize(conv2d(xs, w, b, 2, 1)); }, {{"x", xs}, {"w", w}, {"b", b}})},
               {"stride1", "stride2"});
}

GradcheckReport check_batchnorm() {
  Rng rng(5);
  Tensor x = input({3, 2, 3, 3}, rng), gamma = input({2}, rng, 0.5, 1.5), beta = input({2}, rng);
  auto run = [&](bool train) {
    return gradcheck(
        [&] {
          Tensor mean = Tensor::full({2}, 0.1, DType::f64), var = Tensor::full({2}, 0.8, DType::f64);
          return scalarize(batch_norm(x, gamma, beta, mean, var, train, 0.1, 1e-5));
        },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  };
  return merge({run(true), run(false)}, {"train", "eval"});
}

GradcheckReport check_softmax() {
  Rng rng(6);
  Tensor x = input({2, 3, 4}, rng, -2.0, 2.0);
  std::vector<GradcheckReport> parts;
  for (int axis : {0, 1, 2}) parts.push_back(gradcheck([&] { return scalarize(softmax(x, axis)); }, {{"x", x}}));
  return merge(std::move(parts), {"axis0", "axis1", "axis2"});
}

GradcheckReport check_transformer() {
  Rng rng(16);
  nn::TransformerBlock block(8, 2, 2, rng);
  Tensor tokens = input({2, 5, 8}, rng);
  auto params = weights_of(block);
  params.emplace_back("tokens", tokens);
  return gradcheck([&] { return scalarize(block.forward(tokens)); }, params);
}

GradcheckReport check_lgconv() {
  Rng rng(7);
  nn::LgConv lg(nn::Conv2d(3, 4, 3, 1, true, rng), {.heads = 4, .gamma0 = 0.7}, rng);
  Tensor x = input({2, 3, 5, 5}, rng);
  auto params = weights_of(lg);
  params.emplace_back("x", x);
  return merge({gradcheck([&] { return scalarize(lg.forward(x, true)); }, params),
                gradcheck([&] { return scalarize(lg.forward(x, false)); }, params)},
               {"train", "eval"});
}

GradcheckReport check_lam() {
  Rng rng(20);
  nn::Lam lam(4, rng);
  lam.query.w.copy_data_from(randn(lam.query.w.shape(), rng));
  Tensor f = input({2, 4, 3, 3}, rng);
  auto params = weights_of(lam);
  params.emplace_back("f", f);
  return gradcheck(
      [&] {
        const auto out = lam.forward(f);
        return add(scalarize(out.weighted), scalarize(out.scores, 7));
      },
      params);
}

GradcheckReport check_decoder() {
  Rng rng(9);
  const model::Widths w{3, 4, 4, 5};
  model::Decoder dec(w, 4, rng);
  model::Pyramid p;
  NamedTensors params = weights_of(dec);
  for (std::size_t l = 0; l < 4; ++l) {
    p[l] = input({2, w[l], 8 >> l, 8 >> l}, rng);
    params.emplace_back("F" + std::to_string(l + 1), p[l]);
  }
  return gradcheck([&] { return scalarize(dec.forward(p)); }, params);
}

GradcheckReport check_bin_heads() {
  Rng rng(10);
  model::BinHeads heads(4, {.bins = 5, .d_min = 0.25, .d_max = 10.0, .eps = 1e-3}, rng);
  // Positive biases keep every relu(logit) away from its kink.
  for (Tensor* b : {&heads.center_fc1.b, &heads.center_fc2.b}) {
    b->copy_data_from(rand_uniform(b->shape(), rng, 0.2, 0.5, DType::f64));
  }
  Tensor f = input({2, 4, 3, 3}, rng);
  auto params = weights_of(heads);
  params.emplace_back("features", f);
  return gradcheck(
      [&] {
        const auto p = heads.forward(f);
        return add(scalarize(p.depth), scalarize(p.centers, 3));
      },
      params);
}

GradcheckReport check_silog() {
  Rng rng(3);
  Tensor pred = input({2, 1, 4, 4}, rng, 0.3, 6.0);
  Tensor gt = rand_uniform({2, 1, 4, 4}, rng, 0.3, 6.0, DType::f64);
  Tensor mask = Tensor::ones(gt.shape(), DType::f64);
  mask.set(3, 0.0);
  mask.set(17, 0.0);
  return gradcheck([&] { return loss::silog(pred, gt, mask); }, {{"pred", pred}});
}

GradcheckReport check_attentive_kd() {
  Rng rng(11);
  Tensor fs1 = input({2, 3, 4, 4}, rng), fs2 = input({2, 4, 2, 2}, rng);
  Tensor ft1 = input({2, 3, 4, 4}, rng), ft2 = input({2, 4, 2, 2}, rng);
  Tensor a1 = input({2, 1, 4, 4}, rng, 0.0, 2.0), a2 = input({2, 1, 2, 2}, rng, 0.0, 2.0);
  return gradcheck(
      [&] {
        return loss::attentive_kd(std::array<Tensor, 2>{fs1, fs2}, std::array<Tensor, 2>{ft1, ft2},
                                  std::array<Tensor, 2>{a1, a2});
      },
      {{"fs1", fs1}, {"fs2", fs2}, {"ft1", ft1}, {"ft2", ft2}, {"a1", a1}, {"a2", a2}});
}

const std::vector<std::pair<std::string, std::function<GradcheckReport()>>>& registry() {
  static const std::vector<std::pair<std::string, std::function<GradcheckReport()>>> r{
      {"conv2d", check_conv2d},
      {"batchnorm", check_batchnorm},
      {"softmax", check_softmax},
      {"transformer", check_transformer},
      {"lgconv", check_lgconv},
      {"lam", check_lam},
      {"decoder", check_decoder},
      {"bin_heads", check_bin_heads},
      {"silog", check_silog},
      {"attentive_kd", check_attentive_kd},
  };
  return r;
}

}  // namespace

std::vector<std::string> gradcheck_modules() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

std::vector<ModuleGradcheck> run_gradcheck_suite(const std::string& module) {
  DefaultDTypeGuard f64(DType::f64);
  std::vector<ModuleGradcheck> out;
  for (const auto& [name, fn] : registry()) {
    if (!module.empty() && module != name) continue;
    const auto t0 = std::chrono::steady_clock::now();
    ModuleGradcheck m{.module = name, .report = fn()};
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(m));
  }
  if (out.empty()) {
    std::string known;
    for (const auto& n : gradcheck_modules()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown gradcheck module '" + module + "' (known: " + known + ")");
  }
  return out;
}

}  // namespace kdepth::train
