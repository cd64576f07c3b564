#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rtcan/cvxeda.hpp"
#include "rtcan/types.hpp"

namespace rtcan::synth {

// Generative model mirroring the decomposition: Poisson sudomotor spikes
// convolved with the Bateman kernel, plus a linear tonic drift and white
// Gaussian noise. Supplies ground truth for the recovery oracles.
struct SynthSpec {
  double sampling_hz = 8.0;
  double duration_s = 64.0;
  double scr_rate_hz = 0.1;  // Poisson rate of sudomotor spikes
  double scr_amp_lo = 0.2;
  double scr_amp_hi = 1.0;
  double tonic_level = 2.0;
  double tonic_drift_per_s = 0.01;
  double noise_std = 0.06;
  std::uint64_t seed = 0;

  void validate() const;  // throws BadSpec
};

struct SynthTruth {
  std::vector<double> spike_times_s;
  std::vector<double> true_phasic;
  std::vector<double> true_tonic;
};

std::pair<EdaTrace, SynthTruth> gen_trace(const SynthSpec& spec,
                                          const cvx::BatemanIrf& irf);

// Low/high arousal-analog trace populations: class 1 uses a higher spike
// rate. Defaults follow the generator's SNR conventions.
SynthSpec default_low_spec();
SynthSpec default_high_spec();

struct SynthDataset {
  std::vector<EdaTrace> traces;
  std::vector<AnnotationRecord> annotations;
  std::vector<StimulusFeatures> features;  // empty when music_dim == 0
  std::vector<int> intended_class;         // aligned with traces
  std::vector<SynthTruth> truths;          // aligned with traces
};

// Class-1 traces draw from spec_high, class-0 from spec_low, balanced per
// subject within +-1. Annotations sit near (2,2) / (8,8) with sigma=0.5
// jitter so per-subject relabeling recovers the intended classes; a random
// per-subject gain in [0.5, 2] models individual specificity. Stimulus
// features are class-informative Gaussians plus distractor dimensions.
SynthDataset gen_dataset(int n_subjects, int traces_per_subject,
                         const SynthSpec& spec_low, const SynthSpec& spec_high,
                         int music_dim, std::uint64_t seed);

}  // namespace rtcan::synth
