#pragma once

#include <span>
#include <vector>

#include "rtcan/types.hpp"

namespace rtcan {

// Checks the EdaTrace invariants (finite samples, N >= 2, positive rate)
// and returns the trace unchanged. Throws NonFinite / TooShort / BadRate.
const EdaTrace& validate_trace(const EdaTrace& trace);

// Drops the first floor(seconds * sampling_hz) samples.
EdaTrace trim_head(const EdaTrace& trace, double seconds);

// Piecewise-linear resampling onto a uniform grid over [0, N-1];
// endpoints are preserved exactly.
std::vector<double> resample_linear(std::span<const double> signal,
                                    int target_len);

// Mean 0 / population-std 1 normalization; constant input maps to zeros.
std::vector<double> zscore(std::span<const double> signal);

bool all_finite(std::span<const double> v);

}  // namespace rtcan
