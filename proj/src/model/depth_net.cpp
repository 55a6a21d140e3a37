// SPDX-License-Identifier: Apache-2.0
#include "kdepth/model/depth_net.hpp"

#include <sstream>

namespace kdepth::model {

std::string DepthNetConfig::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << "kdepth/1 enc=" << encoder << " widths=" << widths[0] << ',' << widths[1] << ',' << widths[2] << ','
     << widths[3];
  if (encoder == "transformer") os << " blocks=" << blocks_per_stage << " heads=" << heads;
  os << " lg=" << (lg ? 1 : 0);
  if (lg) os << " lg_heads=" << lg_options.heads;
  os << " features=" << features << " bins=" << bins.bins << " range=" << bins.d_min << ',' << bins.d_max
     << " eps=" << bins.eps;
  return os.str();
}

DepthNet::DepthNet(const DepthNetConfig& cfg, const Rng& rng) : config(cfg) {
  Rng enc_rng = rng.split(1);
  Rng dec_rng = rng.split(2);
  if (cfg.encoder == "cnn") {
    encoder = CnnEncoder(cfg.widths, enc_rng);
  } else if (cfg.encoder == "transformer") {
    encoder = TransformerEncoder(cfg.widths, cfg.blocks_per_stage, cfg.heads, enc_rng);
  } else {
    throw ConfigError("unknown encoder type '" + cfg.encoder + "' (expected cnn or transformer)");
  }
  decoder = DepthDecoder(cfg.widths, cfg.features, cfg.bins, dec_rng);
  if (cfg.lg) {
    Rng lg_rng = rng.split(3);
    std::visit([&](auto& e) { nn::wrap_backbone_with_lgconv(e, cfg.lg_options, lg_rng); }, encoder);
  }
}

Widths DepthNet::widths() const {
  return std::visit([](const auto& e) { return e.widths(); }, encoder);
}

Pyramid DepthNet::encode(const Tensor& x, bool train) const {
  return std::visit([&](const auto& e) { return e.forward(x, train); }, encoder);
}

DepthNet::Output DepthNet::forward(const Tensor& x, bool train) const {
  Output out;
  out.features = encode(x, train);
  out.pred = decoder.forward(out.features);
  return out;
}

void DepthNet::for_each_conv_block(const std::function<void(nn::ConvBnRelu&)>& f) {
  std::visit([&](auto& e) { e.for_each_conv_block(f); }, encoder);
}

void DepthNet::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  std::visit([&](auto& e) { e.visit(nn::join(prefix, "enc"), v); }, encoder);
  decoder.visit(nn::join(prefix, "dec"), v);
}

AcclimatedTeacher::AcclimatedTeacher(const Widths& tw, const DepthNetConfig& student, const AcclimationOptions& opts,
                                     Rng& rng)
    : options(opts) {
  for (std::size_t l = 0; l < 4; ++l) {
    if (options.fam) {
      fam[l] = nn::TransformerBlock(tw[l], options.heads, options.mlp_ratio, rng);
      fam[l].zero_output_projections();
    }
    adapters[l] = nn::Conv2d(tw[l], student.widths[l], 1, 1, true, rng);
    if (options.lam) lam[l] = nn::Lam(student.widths[l], rng);
  }
  ghost = DepthDecoder(student.widths, student.features, student.bins, rng);
  nn::set_requires_grad(ghost, false);
}

void AcclimatedTeacher::sync_ghost(DepthDecoder& student, std::int64_t iteration) {
  nn::copy_parameters(student, ghost);
  synced_iteration = iteration;
}

AcclimatedTeacher::Output AcclimatedTeacher::forward(const Pyramid& f, std::int64_t iteration) const {
  if (synced_iteration != iteration) {
    throw ProtocolError("ghost decoder was last synchronized at iteration " + std::to_string(synced_iteration) +
                        ", not at the current iteration " + std::to_string(iteration));
  }
  return forward_unchecked(f);
}

AcclimatedTeacher::Output AcclimatedTeacher::forward_unchecked(const Pyramid& f) const {
  Output out;
  for (std::size_t l = 0; l < 4; ++l) {
    Tensor h = options.fam ? fam[l].forward_map(f[l]) : f[l];
    h = adapters[l].forward(h);
    out.adapted[l] = h;
    if (options.lam) {
      auto r = lam[l].forward(h);
      out.target[l] = r.weighted;
      out.scores[l] = r.scores;
    } else {
      out.target[l] = h;
      out.scores[l] = Tensor::ones({h.dim(0), 1, h.dim(2), h.dim(3)}, h.dtype());
    }
  }
  out.pred = ghost.forward(out.target);
  return out;
}

void AcclimatedTeacher::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  for (std::size_t l = 0; l < 4; ++l) {
    const std::string s = std::to_string(l + 1);
    if (options.fam) fam[l].visit(nn::join(prefix, "fam" + s), v);
    adapters[l].visit(nn::join(prefix, "adapter" + s), v);
    if (options.lam) lam[l].visit(nn::join(prefix, "lam" + s), v);
  }
  ghost.visit(nn::join(prefix, "ghost"), v);
}

}  // namespace kdepth::model
