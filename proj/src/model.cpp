#include "rtcan/model.hpp"

#include <cmath>

#include "rtcan/errors.hpp"

namespace rtcan::net {

using ag::Tape;
using ag::Tensor;

const char* to_string(AttentionOrder order) {
  switch (order) {
    case AttentionOrder::sca_then_rnta: return "sca_then_rnta";
    case AttentionOrder::rnta_then_sca: return "rnta_then_sca";
    case AttentionOrder::parallel: return "parallel";
    case AttentionOrder::sca_only: return "sca_only";
    case AttentionOrder::rnta_only: return "rnta_only";
    case AttentionOrder::none: return "none";
  }
  return "?";
}

AttentionOrder attention_order_from_string(const std::string& s) {
  for (auto order : {AttentionOrder::sca_then_rnta, AttentionOrder::rnta_then_sca,
                     AttentionOrder::parallel, AttentionOrder::sca_only,
                     AttentionOrder::rnta_only, AttentionOrder::none}) {
    if (s == to_string(order)) return order;
  }
  fail(Err::BadConfig, "unknown attention order '" + s + "'");
}

void RtcanConfig::validate() const {
  if (input_len < stem_kernel) fail(Err::BadConfig, "input_len shorter than stem kernel");
  if (stem_out_channels < 1 || stem_kernel < 1 || stem_stride < 1) {
    fail(Err::BadConfig, "stem parameters must be positive");
  }
  if (num_clips != 3) fail(Err::BadConfig, "num_clips is fixed at 3");
  if (stem_out_len() % num_clips != 0) {
    fail(Err::BadConfig, "stem output length " + std::to_string(stem_out_len()) +
                             " is not divisible by " + std::to_string(num_clips));
  }
  if (reduction_ratio < 1 || stem_out_channels % reduction_ratio != 0) {
    fail(Err::BadConfig, "channels must be divisible by the reduction ratio");
  }
  if (stem_out_channels % 2 != 0) {
    fail(Err::BadConfig, "stem channels must be even for the attention embedding");
  }
  if (rnta_pool_stride < 1 || stem_out_len() / num_clips < rnta_pool_stride) {
    fail(Err::BadConfig, "clip length must be >= rnta_pool_stride");
  }
  if (rfe_depth < 1) fail(Err::BadConfig, "rfe_depth must be >= 1");
  for (int c : rfe_channels) {
    if (c < 1) fail(Err::BadConfig, "rfe channels must be positive");
    if (sca_in_resblock && c % reduction_ratio != 0) {
      fail(Err::BadConfig, "rfe channels must be divisible by the reduction ratio");
    }
  }
  if (music_dim < 0) fail(Err::BadConfig, "music_dim must be >= 0");
  if (num_classes < 2) fail(Err::BadConfig, "num_classes must be >= 2");
}

namespace {

Tensor gaussian(std::vector<int> shape, Rng& rng, double stddev = 0.01) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0, stddev);
  return t;
}

// Classifier layers have no batch-norm behind them, so a flat 0.01 scale
// stacks three attenuations and freezes the logits near zero; fan-in
// scaling keeps the head trainable.
Tensor fan_in_gaussian(int in_dim, int out_dim, Rng& rng) {
  return gaussian({in_dim, out_dim}, rng, std::sqrt(2.0 / in_dim));
}

Tensor zeros_param(std::vector<int> shape) {
  return Tensor::zeros(std::move(shape), true);
}

}  // namespace

BatchNorm BatchNorm::make(int channels, double gamma_init) {
  BatchNorm bn;
  bn.gamma = Tensor::full({channels}, gamma_init);
  bn.gamma.set_requires_grad(true);
  bn.beta = zeros_param({channels});
  bn.running_mean = Tensor::zeros({channels});
  bn.running_var = Tensor::full({channels}, 1.0);
  return bn;
}

Tensor BatchNorm::forward(const Tensor& x, bool train, Tape* tape) {
  return ag::batchnorm1d(x, gamma, beta, running_mean, running_var, train,
                         momentum, eps, tape);
}

ScaParams ScaParams::make(int channels, int reduction, Rng& rng) {
  ScaParams p;
  const int hidden = channels / reduction;
  p.w0 = gaussian({channels, hidden}, rng);
  p.b0 = zeros_param({hidden});
  p.w1 = gaussian({hidden, channels}, rng);
  p.b1 = zeros_param({channels});
  return p;
}

Tensor ScaParams::forward(const Tensor& clip, Tape* tape) const {
  const int T = clip.size(2);
  Tensor squeezed = ag::avgpool1d(clip, T, 1, tape);            // (B,C,1)
  squeezed = ag::reshape(squeezed, {clip.size(0), clip.size(1)}, tape);
  Tensor h = ag::relu(ag::dense(squeezed, w0, b0, tape), tape);
  Tensor weights = ag::sigmoid(ag::dense(h, w1, b1, tape), tape);  // (B,C) in (0,1)
  return ag::scale_channels(clip, weights, tape);
}

RntaParams RntaParams::make(int channels, int pool_stride, Rng& rng) {
  RntaParams p;
  const int half = channels / 2;
  p.theta_w = gaussian({half, channels, 1}, rng);
  p.theta_b = zeros_param({half});
  p.phi_w = gaussian({half, channels, 1}, rng);
  p.phi_b = zeros_param({half});
  p.g_w = gaussian({half, channels, 1}, rng);
  p.g_b = zeros_param({half});
  p.out_w = gaussian({channels, half, 1}, rng);
  p.out_b = zeros_param({channels});
  p.bn = BatchNorm::make(channels, 0.0);  // identity block at init
  p.pool_stride = pool_stride;
  return p;
}

Tensor RntaParams::forward(const Tensor& clip, bool train, Tape* tape,
                           Tensor* affinity_out) {
  Tensor theta = ag::conv1d(clip, theta_w, theta_b, 1, 0, tape);  // (B,C/2,T)
  Tensor phi = ag::conv1d(clip, phi_w, phi_b, 1, 0, tape);
  Tensor g = ag::conv1d(clip, g_w, g_b, 1, 0, tape);
  phi = ag::avgpool1d(phi, pool_stride, pool_stride, tape);  // (B,C/2,T')
  g = ag::avgpool1d(g, pool_stride, pool_stride, tape);
  Tensor affinity =
      ag::matmul_batched(ag::transpose12(theta, tape), phi, tape);  // (B,T,T')
  affinity = ag::softmax_lastdim(affinity, tape);
  if (affinity_out) *affinity_out = affinity;
  Tensor attended =
      ag::matmul_batched(affinity, ag::transpose12(g, tape), tape);  // (B,T,C/2)
  attended = ag::transpose12(attended, tape);                        // (B,C/2,T)
  Tensor projected = ag::conv1d(attended, out_w, out_b, 1, 0, tape);
  projected = bn.forward(projected, train, tape);
  return ag::add(projected, clip, tape);
}

RtcanModel::RtcanModel(const RtcanConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  stem_w_ = gaussian({cfg_.stem_out_channels, 3, cfg_.stem_kernel}, rng);
  stem_b_ = zeros_param({cfg_.stem_out_channels});
  stem_bn_ = BatchNorm::make(cfg_.stem_out_channels, 1.0);
  sca_ = ScaParams::make(cfg_.stem_out_channels, cfg_.reduction_ratio, rng);
  rnta_ = RntaParams::make(cfg_.stem_out_channels, cfg_.rnta_pool_stride, rng);

  int in_ch = cfg_.stem_out_channels;
  for (int level = 0; level < 4; ++level) {
    ResLevel lvl;
    lvl.stride = level == 0 ? 1 : 2;
    const int out_ch = cfg_.rfe_channels[static_cast<std::size_t>(level)];
    for (int rep = 0; rep < cfg_.rfe_depth; ++rep) {
      ResRep r;
      const int rep_in = rep == 0 ? in_ch : out_ch;
      if (cfg_.sca_in_resblock) {
        r.gate = ScaParams::make(rep_in, cfg_.reduction_ratio, rng);
      }
      r.conv_w = gaussian({out_ch, rep_in, 3}, rng);
      r.conv_b = zeros_param({out_ch});
      r.bn = BatchNorm::make(out_ch, 1.0);
      lvl.reps.push_back(std::move(r));
    }
    if (in_ch != out_ch || lvl.stride != 1) {
      lvl.has_skip_conv = true;
      lvl.skip_w = gaussian({out_ch, in_ch, 1}, rng);
      lvl.skip_b = zeros_param({out_ch});
    }
    levels_.push_back(std::move(lvl));
    in_ch = out_ch;
  }

  const int fused = cfg_.rfe_channels[3] + cfg_.music_dim;
  fc1_w_ = fan_in_gaussian(fused, cfg_.classifier_hidden[0], rng);
  fc1_b_ = zeros_param({cfg_.classifier_hidden[0]});
  fc2_w_ = fan_in_gaussian(cfg_.classifier_hidden[0], cfg_.classifier_hidden[1], rng);
  fc2_b_ = zeros_param({cfg_.classifier_hidden[1]});
  fc3_w_ = fan_in_gaussian(cfg_.classifier_hidden[1], cfg_.num_classes, rng);
  fc3_b_ = zeros_param({cfg_.num_classes});
}

Tensor RtcanModel::shallow_feature(const Tensor& x, bool train, Tape* tape) {
  if (x.dim() != 3 || x.size(1) != 3 || x.size(2) != cfg_.input_len) {
    fail(Err::ShapeMismatch, "shallow_feature: expected (B,3," +
                                 std::to_string(cfg_.input_len) + ")");
  }
  Tensor h = ag::conv1d(x, stem_w_, stem_b_, cfg_.stem_stride, cfg_.stem_pad(), tape);
  h = stem_bn_.forward(h, train, tape);
  return ag::relu(h, tape);
}

std::vector<Tensor> RtcanModel::clip_temporal(const Tensor& f, Tape* tape) const {
  if (f.dim() != 3) fail(Err::ShapeMismatch, "clip_temporal: expected (B,C,L)");
  const int L = f.size(2);
  if (L % cfg_.num_clips != 0) {
    fail(Err::NotDivisible, "temporal length " + std::to_string(L) +
                                " not divisible by " + std::to_string(cfg_.num_clips));
  }
  const int seg = L / cfg_.num_clips;
  std::vector<Tensor> clips;
  clips.reserve(static_cast<std::size_t>(cfg_.num_clips));
  for (int i = 0; i < cfg_.num_clips; ++i) {
    clips.push_back(ag::slice(f, 2, i * seg, seg, tape));
  }
  return clips;
}

Tensor RtcanModel::sca_forward(const Tensor& clip, Tape* tape) const {
  if (clip.size(1) % cfg_.reduction_ratio != 0) {
    fail(Err::ShapeMismatch, "sca_forward: channels not divisible by reduction ratio");
  }
  return sca_.forward(clip, tape);
}

Tensor RtcanModel::rnta_forward(const Tensor& clip, bool train, Tape* tape,
                                Tensor* affinity_out) {
  return rnta_.forward(clip, train, tape, affinity_out);
}

Tensor RtcanModel::attention_block(const std::vector<Tensor>& clips,
                                   AttentionOrder order, bool train, Tape* tape,
                                   ForwardCapture* capture) {
  std::vector<Tensor> sca_stage, rnta_stage, final_stage;
  for (const auto& clip : clips) {
    switch (order) {
      case AttentionOrder::none:
        final_stage.push_back(clip);
        break;
      case AttentionOrder::sca_only: {
        Tensor s = sca_forward(clip, tape);
        sca_stage.push_back(s);
        final_stage.push_back(s);
        break;
      }
      case AttentionOrder::rnta_only: {
        Tensor r = rnta_forward(clip, train, tape);
        rnta_stage.push_back(r);
        final_stage.push_back(r);
        break;
      }
      case AttentionOrder::sca_then_rnta: {
        Tensor s = sca_forward(clip, tape);
        Tensor r = rnta_forward(s, train, tape);
        sca_stage.push_back(s);
        rnta_stage.push_back(r);
        final_stage.push_back(r);
        break;
      }
      case AttentionOrder::rnta_then_sca: {
        Tensor r = rnta_forward(clip, train, tape);
        Tensor s = sca_forward(r, tape);
        rnta_stage.push_back(r);
        sca_stage.push_back(s);
        final_stage.push_back(s);
        break;
      }
      case AttentionOrder::parallel: {
        Tensor s = sca_forward(clip, tape);
        Tensor r = rnta_forward(clip, train, tape);
        sca_stage.push_back(s);
        rnta_stage.push_back(r);
        Tensor gate = ag::sigmoid(ag::add(s, r, tape), tape);
        final_stage.push_back(ag::mul(gate, clip, tape));
        break;
      }
    }
  }
  Tensor out = ag::concat(final_stage, 2, tape);
  if (capture) {
    if (!sca_stage.empty()) capture->sca_out = ag::concat(sca_stage, 2, tape);
    if (!rnta_stage.empty()) capture->rnta_out = ag::concat(rnta_stage, 2, tape);
    capture->attention_out = out;
  }
  return out;
}

Tensor RtcanModel::rfe_forward(const Tensor& f, bool train, Tape* tape) {
  Tensor h = f;
  for (auto& lvl : levels_) {
    Tensor skip = lvl.has_skip_conv
                      ? ag::conv1d(h, lvl.skip_w, lvl.skip_b, lvl.stride, 0, tape)
                      : h;
    Tensor body = h;
    for (std::size_t rep = 0; rep < lvl.reps.size(); ++rep) {
      auto& r = lvl.reps[rep];
      if (r.gate) body = r.gate->forward(body, tape);
      const int stride = rep == 0 ? lvl.stride : 1;
      body = ag::conv1d(body, r.conv_w, r.conv_b, stride, 1, tape);
      body = r.bn.forward(body, train, tape);
      body = ag::relu(body, tape);
    }
    h = ag::add(body, skip, tape);
  }
  Tensor pooled = ag::avgpool1d(h, h.size(2), 1, tape);  // global average
  return ag::reshape(pooled, {h.size(0), h.size(1)}, tape);
}

Tensor RtcanModel::classify_fused(const Tensor& f_ef,
                                  const std::optional<Tensor>& f_mf, Tape* tape,
                                  ForwardCapture* capture) {
  Tensor fused = f_ef;
  if (cfg_.music_dim > 0) {
    if (!f_mf) fail(Err::ShapeMismatch, "config expects stimulus features");
    if (f_mf->dim() != 2 || f_mf->size(1) != cfg_.music_dim) {
      fail(Err::ShapeMismatch, "stimulus feature dim must be " +
                                   std::to_string(cfg_.music_dim));
    }
    fused = ag::concat({f_ef, *f_mf}, 1, tape);
  } else if (f_mf) {
    fail(Err::ShapeMismatch, "config is EDA-only but stimulus features given");
  }
  Tensor h = ag::relu(ag::dense(fused, fc1_w_, fc1_b_, tape), tape);
  h = ag::relu(ag::dense(h, fc2_w_, fc2_b_, tape), tape);
  Tensor logits = ag::dense(h, fc3_w_, fc3_b_, tape);
  if (capture) capture->logits = logits;
  return ag::softmax_lastdim(logits, tape);
}

Tensor RtcanModel::forward(const Tensor& x, const std::optional<Tensor>& music,
                           bool train, Tape* tape, ForwardCapture* capture) {
  Tensor f_sf = shallow_feature(x, train, tape);
  auto clips = clip_temporal(f_sf, tape);
  Tensor f_a = attention_block(clips, cfg_.attention_order, train, tape, capture);
  Tensor f_ef = rfe_forward(f_a, train, tape);
  return classify_fused(f_ef, music, tape, capture);
}

std::vector<Tensor> RtcanModel::parameters() {
  // attention blocks outside the configured arrangement take no part in the
  // forward pass, so they carry no gradients and are not trainable here
  const auto order = cfg_.attention_order;
  const bool sca_used = order != AttentionOrder::none && order != AttentionOrder::rnta_only;
  const bool rnta_used = order != AttentionOrder::none && order != AttentionOrder::sca_only;
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) {
    if (name.find("running_") != std::string::npos) continue;
    if (!sca_used && name.rfind("sca.", 0) == 0) continue;
    if (!rnta_used && name.rfind("rnta.", 0) == 0) continue;
    out.push_back(t);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> RtcanModel::named_tensors() {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_bn = [&out](const std::string& prefix, BatchNorm& bn) {
    out.emplace_back(prefix + ".gamma", bn.gamma);
    out.emplace_back(prefix + ".beta", bn.beta);
    out.emplace_back(prefix + ".running_mean", bn.running_mean);
    out.emplace_back(prefix + ".running_var", bn.running_var);
  };
  auto add_sca = [&out](const std::string& prefix, ScaParams& s) {
    out.emplace_back(prefix + ".w0", s.w0);
    out.emplace_back(prefix + ".b0", s.b0);
    out.emplace_back(prefix + ".w1", s.w1);
    out.emplace_back(prefix + ".b1", s.b1);
  };
  out.emplace_back("stem.conv.w", stem_w_);
  out.emplace_back("stem.conv.b", stem_b_);
  add_bn("stem.bn", stem_bn_);
  add_sca("sca", sca_);
  out.emplace_back("rnta.theta.w", rnta_.theta_w);
  out.emplace_back("rnta.theta.b", rnta_.theta_b);
  out.emplace_back("rnta.phi.w", rnta_.phi_w);
  out.emplace_back("rnta.phi.b", rnta_.phi_b);
  out.emplace_back("rnta.g.w", rnta_.g_w);
  out.emplace_back("rnta.g.b", rnta_.g_b);
  out.emplace_back("rnta.out.w", rnta_.out_w);
  out.emplace_back("rnta.out.b", rnta_.out_b);
  add_bn("rnta.bn", rnta_.bn);
  for (std::size_t lvl = 0; lvl < levels_.size(); ++lvl) {
    const std::string lp = "rfe.level" + std::to_string(lvl);
    for (std::size_t rep = 0; rep < levels_[lvl].reps.size(); ++rep) {
      const std::string rp = lp + ".rep" + std::to_string(rep);
      auto& r = levels_[lvl].reps[rep];
      if (r.gate) add_sca(rp + ".gate", *r.gate);
      out.emplace_back(rp + ".conv.w", r.conv_w);
      out.emplace_back(rp + ".conv.b", r.conv_b);
      add_bn(rp + ".bn", r.bn);
    }
    if (levels_[lvl].has_skip_conv) {
      out.emplace_back(lp + ".skip.w", levels_[lvl].skip_w);
      out.emplace_back(lp + ".skip.b", levels_[lvl].skip_b);
    }
  }
  out.emplace_back("fc1.w", fc1_w_);
  out.emplace_back("fc1.b", fc1_b_);
  out.emplace_back("fc2.w", fc2_w_);
  out.emplace_back("fc2.b", fc2_b_);
  out.emplace_back("fc3.w", fc3_w_);
  out.emplace_back("fc3.b", fc3_b_);
  return out;
}

}  // namespace rtcan::net
