#pragma once

#include <string>
#include <vector>

#include "rtcan/model.hpp"
#include "rtcan/types.hpp"

namespace rtcan::cam {

enum class Layer { sca_out, rnta_out, attention_out };

const char* to_string(Layer layer);
Layer layer_from_string(const std::string& s);

// Per-position attribution over the 3-channel input, normalized to [0,1]
// (max 1 whenever any weight is positive; an all-zero map stays all-zero).
struct SaliencyMap {
  int target_class = 0;
  Layer layer = Layer::attention_out;
  std::vector<double> weights;  // length input_len
};

// Standard 1D class-activation mapping at the chosen attention-stage
// output: channel weights are the time-averaged gradients of the
// pre-softmax target logit, the map is relu(sum_c w_c * A_c[t]) upsampled
// to input_len by linear interpolation and min-max normalized.
SaliencyMap gradcam_1d(net::RtcanModel& model, const LabeledExample& example,
                       Layer layer, int target_class);

// Writes <out_path_base>.csv (t,origin,phasic,tonic,weight_<layer>...) and
// <out_path_base>.svg (signal curves over a saliency column strip, one
// panel per map).
void emit_plot(const LabeledExample& example,
               const std::vector<SaliencyMap>& maps,
               const std::string& out_path_base);

}  // namespace rtcan::cam
