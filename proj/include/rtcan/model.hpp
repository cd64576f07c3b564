#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtcan/ops.hpp"
#include "rtcan/rng.hpp"
#include "rtcan/tensor.hpp"

namespace rtcan::net {

// Attention arrangement ablation grid. `parallel` feeds the clip to both
// blocks, sums the outputs, sigmoid-normalizes and uses the result as a
// multiplicative gate on the clip.
enum class AttentionOrder {
  sca_then_rnta,
  rnta_then_sca,
  parallel,
  sca_only,
  rnta_only,
  none,
};

const char* to_string(AttentionOrder order);
AttentionOrder attention_order_from_string(const std::string& s);

struct RtcanConfig {
  int input_len = 1200;
  int stem_out_channels = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  int num_clips = 3;  // fixed by the temporal clipping scheme
  int reduction_ratio = 4;
  AttentionOrder attention_order = AttentionOrder::sca_then_rnta;
  int rnta_pool_stride = 2;
  int rfe_depth = 1;
  std::array<int, 4> rfe_channels{64, 64, 64, 64};
  bool sca_in_resblock = true;   // large-scale profile keeps the in-block gate
  int music_dim = 0;             // 0 = EDA-only path
  std::array<int, 2> classifier_hidden{256, 128};
  int num_classes = 2;

  int stem_pad() const { return stem_kernel / 2; }
  int stem_out_len() const {
    return (input_len + 2 * stem_pad() - stem_kernel) / stem_stride + 1;
  }
  void validate() const;  // throws BadConfig
};

// Batch-normalization parameter/buffer bundle.
struct BatchNorm {
  ag::Tensor gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm make(int channels, double gamma_init);
  ag::Tensor forward(const ag::Tensor& x, bool train, ag::Tape* tape);
};

// Squeeze-excitation channel gate: global average over time, two dense
// layers with a reduction bottleneck, sigmoid weights broadcast over time.
struct ScaParams {
  ag::Tensor w0, b0, w1, b1;

  static ScaParams make(int channels, int reduction, Rng& rng);
  ag::Tensor forward(const ag::Tensor& clip, ag::Tape* tape) const;
};

// Non-local temporal attention with pooled key/value paths and a residual
// connection; the output batchnorm scale starts at zero so the block is the
// identity map at initialization.
struct RntaParams {
  ag::Tensor theta_w, theta_b, phi_w, phi_b, g_w, g_b, out_w, out_b;
  BatchNorm bn;
  int pool_stride = 2;

  static RntaParams make(int channels, int pool_stride, Rng& rng);
  // affinity_out, when given, receives the softmax-normalized (B,T,T')
  // attention matrix.
  ag::Tensor forward(const ag::Tensor& clip, bool train, ag::Tape* tape,
                     ag::Tensor* affinity_out = nullptr);
};

struct ResRep {
  std::optional<ScaParams> gate;
  ag::Tensor conv_w, conv_b;
  BatchNorm bn;
};

struct ResLevel {
  std::vector<ResRep> reps;
  ag::Tensor skip_w, skip_b;  // empty when the skip is the identity
  bool has_skip_conv = false;
  int stride = 1;
};

// Intermediate feature maps captured during a forward pass, for saliency.
struct ForwardCapture {
  ag::Tensor sca_out;
  ag::Tensor rnta_out;
  ag::Tensor attention_out;
  ag::Tensor logits;  // pre-softmax classifier output
};

class RtcanModel {
 public:
  RtcanModel(const RtcanConfig& cfg, std::uint64_t seed);

  const RtcanConfig& config() const { return cfg_; }

  ag::Tensor shallow_feature(const ag::Tensor& x, bool train, ag::Tape* tape);
  std::vector<ag::Tensor> clip_temporal(const ag::Tensor& f, ag::Tape* tape) const;
  ag::Tensor sca_forward(const ag::Tensor& clip, ag::Tape* tape) const;
  ag::Tensor rnta_forward(const ag::Tensor& clip, bool train, ag::Tape* tape,
                          ag::Tensor* affinity_out = nullptr);
  ag::Tensor attention_block(const std::vector<ag::Tensor>& clips,
                             AttentionOrder order, bool train, ag::Tape* tape,
                             ForwardCapture* capture = nullptr);
  ag::Tensor rfe_forward(const ag::Tensor& f, bool train, ag::Tape* tape);
  ag::Tensor classify_fused(const ag::Tensor& f_ef,
                            const std::optional<ag::Tensor>& f_mf, ag::Tape* tape,
                            ForwardCapture* capture = nullptr);

  // shallow_feature -> clip_temporal -> attention_block -> rfe_forward ->
  // classify_fused; rows of the result are softmax-normalized.
  ag::Tensor forward(const ag::Tensor& x, const std::optional<ag::Tensor>& music,
                     bool train, ag::Tape* tape, ForwardCapture* capture = nullptr);

  std::vector<ag::Tensor> parameters();  // trainable tensors, stable order
  std::vector<std::pair<std::string, ag::Tensor>> named_tensors();  // + buffers

  // Shared attention blocks (one instance reused across all clips).
  ScaParams& sca() { return sca_; }
  RntaParams& rnta() { return rnta_; }
  std::vector<ResLevel>& rfe_levels() { return levels_; }
  ag::Tensor& classifier_out_w() { return fc3_w_; }
  ag::Tensor& classifier_out_b() { return fc3_b_; }

 private:
  RtcanConfig cfg_;
  ag::Tensor stem_w_, stem_b_;
  BatchNorm stem_bn_;
  ScaParams sca_;
  RntaParams rnta_;
  std::vector<ResLevel> levels_;
  ag::Tensor fc1_w_, fc1_b_, fc2_w_, fc2_b_, fc3_w_, fc3_b_;
};

}  // namespace rtcan::net
