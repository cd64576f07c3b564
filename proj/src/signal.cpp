#include "rtcan/signal.hpp"

#include <cmath>

#include "rtcan/errors.hpp"

namespace rtcan {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

const EdaTrace& validate_trace(const EdaTrace& trace) {
  if (trace.sampling_hz <= 0.0 || !std::isfinite(trace.sampling_hz)) {
    fail(Err::BadRate, "sampling_hz must be positive, got " +
                           std::to_string(trace.sampling_hz));
  }
  if (trace.samples.size() < 2) {
    fail(Err::TooShort, "trace needs at least 2 samples, got " +
                            std::to_string(trace.samples.size()));
  }
  if (!all_finite(trace.samples)) {
    fail(Err::NonFinite, "trace " + trace.subject_id + "/" +
                             trace.stimulus_id + " contains NaN or Inf");
  }
  return trace;
}

EdaTrace trim_head(const EdaTrace& trace, double seconds) {
  validate_trace(trace);
  if (seconds < 0.0) fail(Err::BadParams, "trim seconds must be >= 0");
  const auto drop =
      static_cast<std::size_t>(std::floor(seconds * trace.sampling_hz));
  if (drop + 2 > trace.samples.size()) {
    fail(Err::TooShort, "trimming " + std::to_string(drop) +
                            " samples leaves fewer than 2 of " +
                            std::to_string(trace.samples.size()));
  }
  EdaTrace out = trace;
  out.samples.assign(trace.samples.begin() + static_cast<std::ptrdiff_t>(drop),
                     trace.samples.end());
  return out;
}

std::vector<double> resample_linear(std::span<const double> signal,
                                    int target_len) {
  const int n = static_cast<int>(signal.size());
  if (n < 2) fail(Err::TooShort, "resample input needs >= 2 samples");
  if (target_len < 2) fail(Err::TooShort, "resample target needs >= 2");
  std::vector<double> out(static_cast<std::size_t>(target_len));
  const double scale =
      static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
  out.front() = signal.front();
  out.back() = signal.back();
  for (int i = 1; i + 1 < target_len; ++i) {
    const double pos = scale * static_cast<double>(i);
    const int lo = static_cast<int>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    out[static_cast<std::size_t>(i)] =
        signal[static_cast<std::size_t>(lo)] * (1.0 - frac) +
        signal[static_cast<std::size_t>(lo + 1)] * frac;
  }
  return out;
}

std::vector<double> zscore(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 2) fail(Err::TooShort, "zscore input needs >= 2 samples");
  double mean = 0.0;
  for (double x : signal) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : signal) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  std::vector<double> out(n);
  if (var == 0.0) return out;  // flat segment: all zeros, never an error
  const double inv_std = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) out[i] = (signal[i] - mean) * inv_std;
  return out;
}

const char* err_name(Err e) {
  switch (e) {
    case Err::NonFinite: return "NonFinite";
    case Err::TooShort: return "TooShort";
    case Err::BadRate: return "BadRate";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::BadLabel: return "BadLabel";
    case Err::DetachedLoss: return "DetachedLoss";
    case Err::MissingGrad: return "MissingGrad";
    case Err::BadParams: return "BadParams";
    case Err::NoConvergence: return "NoConvergence";
    case Err::TooFew: return "TooFew";
    case Err::EmptySet: return "EmptySet";
    case Err::LeakageDetected: return "LeakageDetected";
    case Err::Degenerate: return "Degenerate";
    case Err::UnknownLayer: return "UnknownLayer";
    case Err::IoError: return "IoError";
    case Err::BadSpec: return "BadSpec";
    case Err::NotDivisible: return "NotDivisible";
    case Err::BadConfig: return "BadConfig";
    case Err::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace rtcan
