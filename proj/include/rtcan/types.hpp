#pragma once

#include <optional>
#include <string>
#include <vector>

namespace rtcan {

// One subject x stimulus raw skin-conductance recording in microsiemens.
struct EdaTrace {
  std::string subject_id;
  std::string stimulus_id;
  double sampling_hz = 0.0;
  std::vector<double> samples;
};

// Output of the convex decomposition. All five vectors share the trace
// length; origin == phasic + tonic + residual holds exactly by
// construction and driver >= 0 elementwise.
struct DecomposedEda {
  std::vector<double> origin;
  std::vector<double> phasic;
  std::vector<double> tonic;
  std::vector<double> driver;
  std::vector<double> residual;
};

// Raw 1..9 valence/arousal self-assessment for one subject x stimulus.
struct AnnotationRecord {
  std::string subject_id;
  std::string stimulus_id;
  double valence = 0.0;
  double arousal = 0.0;
};

struct BinaryLabels {
  int valence_class = 0;  // 0 = low, 1 = high
  int arousal_class = 0;
};

// Precomputed external stimulus feature vector (e.g. acoustic features);
// all rows of one dataset share the dimension.
struct StimulusFeatures {
  std::string stimulus_id;
  std::vector<double> vector;
};

// One network-ready example: 3 x length matrix (origin, phasic, tonic
// rows after preprocessing), optional stimulus feature vector, labels.
struct LabeledExample {
  std::vector<double> channels;  // row-major 3 x length
  int length = 0;
  std::optional<std::vector<double>> music;
  BinaryLabels labels;
  std::string subject_id;
  std::string stimulus_id;
};

}  // namespace rtcan
