// SPDX-License-Identifier: Apache-2.0
#include "kdepth/train/optimizer.hpp"

#include <cmath>

#include "kdepth/tensor/tape.hpp"

namespace kdepth::train {

double linear_lr(std::int64_t t, std::int64_t total, double lr_start, double lr_end) {
  if (total <= 1) return lr_start;
  if (t >= total - 1) return lr_end;
  return lr_start + (lr_end - lr_start) * static_cast<double>(t) / static_cast<double>(total - 1);
}

void Adam::step(nn::ParameterStore& store, double lr) {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = lr * options_.weight_decay;
  for (auto* e : store.trainable()) {
    Tensor& p = e->tensor;
    if (!p.has_grad()) continue;
    auto [it, fresh] = state_.try_emplace(e->name);
    Moments& s = it->second;
    if (fresh) {
      s.m = Tensor::zeros(p.shape(), p.dtype());
      s.v = Tensor::zeros(p.shape(), p.dtype());
    }
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const Tensor grad = p.grad();
      auto w = p.data<T>();
      auto g = grad.template data<T>();
      auto m = s.m.template data<T>();
      auto v = s.v.template data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        double wi = static_cast<double>(w[i]);
        wi -= decay * wi;
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        wi -= lr * (mi / c1) / (std::sqrt(vi / c2) + options_.eps);
        w[i] = static_cast<T>(wi);
      }
    });
  }
}

void Adam::export_state(const std::string& prefix, std::map<std::string, Tensor>& out) const {
  for (const auto& [name, s] : state_) {
    out[prefix + "m/" + name] = s.m;
    out[prefix + "v/" + name] = s.v;
  }
  out[prefix + "step"] = Tensor::from({1}, {static_cast<double>(step_)}, DType::f64);
}

void Adam::import_state(const std::string& prefix, const std::map<std::string, Tensor>& in) {
  state_.clear();
  step_ = 0;
  const std::string mp = prefix + "m/";
  for (auto it = in.lower_bound(mp); it != in.end() && it->first.starts_with(mp); ++it) {
    const std::string name = it->first.substr(mp.size());
    const auto v = in.find(prefix + "v/" + name);
    if (v == in.end() || v->second.shape() != it->second.shape()) {
      throw FormatError("optimizer state for " + name + " is incomplete");
    }
    state_[name] = Moments{it->second.clone(), v->second.clone()};
  }
  if (const auto s = in.find(prefix + "step"); s != in.end()) step_ = static_cast<std::int64_t>(s->second.at(0));
}

}  // namespace kdepth::train
