#include "rtcan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtcan/errors.hpp"
#include "rtcan/rng.hpp"

namespace rtcan::synth {

void SynthSpec::validate() const {
  if (sampling_hz <= 0.0) fail(Err::BadSpec, "sampling_hz must be positive");
  if (duration_s * sampling_hz < 64.0) {
    fail(Err::BadSpec, "duration * rate must give >= 64 samples");
  }
  if (scr_rate_hz < 0.0 || scr_amp_lo < 0.0 || scr_amp_hi < scr_amp_lo) {
    fail(Err::BadSpec, "spike rate/amplitudes must be non-negative with hi >= lo");
  }
  if (noise_std < 0.0) fail(Err::BadSpec, "noise_std must be >= 0");
}

std::pair<EdaTrace, SynthTruth> gen_trace(const SynthSpec& spec,
                                          const cvx::BatemanIrf& irf) {
  spec.validate();
  const int n = static_cast<int>(spec.duration_s * spec.sampling_hz);
  const auto kernel = cvx::sample_irf(irf, spec.sampling_hz);
  Rng rng(spec.seed);

  SynthTruth truth;
  std::vector<double> driver(static_cast<std::size_t>(n), 0.0);
  if (spec.scr_rate_hz > 0.0) {
    double t = rng.exponential(spec.scr_rate_hz);
    while (t < spec.duration_s) {
      const int idx = static_cast<int>(t * spec.sampling_hz);
      if (idx < n) {
        const double amp = rng.uniform(spec.scr_amp_lo, spec.scr_amp_hi);
        driver[static_cast<std::size_t>(idx)] += amp;
        truth.spike_times_s.push_back(idx / spec.sampling_hz);
      }
      t += rng.exponential(spec.scr_rate_hz);
    }
  }

  // Direct causal convolution of the spike train with the kernel. Written
  // out here so the generator stays independent of the solver's operator.
  truth.true_phasic.assign(static_cast<std::size_t>(n), 0.0);
  const int K = static_cast<int>(kernel.size());
  for (int j = 0; j < n; ++j) {
    const double a = driver[static_cast<std::size_t>(j)];
    if (a == 0.0) continue;
    const int kmax = std::min(K, n - j);
    for (int k = 0; k < kmax; ++k) {
      truth.true_phasic[static_cast<std::size_t>(j + k)] +=
          a * kernel[static_cast<std::size_t>(k)];
    }
  }

  truth.true_tonic.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    truth.true_tonic[static_cast<std::size_t>(i)] =
        spec.tonic_level + spec.tonic_drift_per_s * (i / spec.sampling_hz);
  }

  EdaTrace trace;
  trace.sampling_hz = spec.sampling_hz;
  trace.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = truth.true_phasic[static_cast<std::size_t>(i)] +
               truth.true_tonic[static_cast<std::size_t>(i)];
    if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
    trace.samples[static_cast<std::size_t>(i)] = v;
  }
  return {std::move(trace), std::move(truth)};
}

SynthSpec default_low_spec() {
  SynthSpec s;
  s.scr_rate_hz = 0.05;
  return s;
}

SynthSpec default_high_spec() {
  SynthSpec s;
  s.scr_rate_hz = 0.25;
  return s;
}

SynthDataset gen_dataset(int n_subjects, int traces_per_subject,
                         const SynthSpec& spec_low, const SynthSpec& spec_high,
                         int music_dim, std::uint64_t seed) {
  if (n_subjects < 10) fail(Err::BadSpec, "need >= 10 subjects for a 10-fold plan");
  if (traces_per_subject < 2) fail(Err::BadSpec, "need >= 2 traces per subject");
  if (music_dim < 0) fail(Err::BadSpec, "music_dim must be >= 0");
  spec_low.validate();
  spec_high.validate();

  const cvx::BatemanIrf irf;
  SynthDataset ds;
  Rng top(seed);
  for (int s = 0; s < n_subjects; ++s) {
    Rng subject_rng(mix_seed(seed, 0x1000 + static_cast<std::uint64_t>(s)));
    const double gain = subject_rng.uniform(0.5, 2.0);
    const std::string subject_id = "S" + std::to_string(s);
    for (int k = 0; k < traces_per_subject; ++k) {
      const int cls = k % 2;  // balanced within +-1 per subject
      SynthSpec spec = cls == 1 ? spec_high : spec_low;
      spec.seed = mix_seed(seed, (static_cast<std::uint64_t>(s) << 20) |
                                     static_cast<std::uint64_t>(k));
      auto [trace, truth] = gen_trace(spec, irf);
      trace.subject_id = subject_id;
      trace.stimulus_id = "M" + std::to_string(s) + "_" + std::to_string(k);
      for (double& v : trace.samples) v *= gain;

      AnnotationRecord ann;
      ann.subject_id = subject_id;
      ann.stimulus_id = trace.stimulus_id;
      const double center = cls == 1 ? 8.0 : 2.0;
      ann.valence = std::clamp(center + subject_rng.normal(0.0, 0.5), 1.0, 9.0);
      ann.arousal = std::clamp(center + subject_rng.normal(0.0, 0.5), 1.0, 9.0);

      if (music_dim > 0) {
        StimulusFeatures feat;
        feat.stimulus_id = trace.stimulus_id;
        feat.vector.resize(static_cast<std::size_t>(music_dim));
        const int informative = (music_dim + 1) / 2;
        for (int d = 0; d < music_dim; ++d) {
          const double mean = d < informative ? (cls == 1 ? 1.0 : -1.0) : 0.0;
          feat.vector[static_cast<std::size_t>(d)] = top.normal(mean, 1.0);
        }
        ds.features.push_back(std::move(feat));
      }

      ds.traces.push_back(std::move(trace));
      ds.annotations.push_back(std::move(ann));
      ds.intended_class.push_back(cls);
      ds.truths.push_back(std::move(truth));
    }
  }
  return ds;
}

}  // namespace rtcan::synth
