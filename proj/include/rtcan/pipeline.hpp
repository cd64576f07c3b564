#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rtcan/cvxeda.hpp"
#include "rtcan/model.hpp"
#include "rtcan/types.hpp"

namespace rtcan::pipe {

enum class Dim { valence, arousal };
const char* to_string(Dim dim);

// Subject-disjoint cross-validation assignment.
struct FoldPlan {
  std::vector<std::vector<std::string>> folds;
};

struct TrainSchedule {
  double lr0 = 0.001;
  double decay = 0.9;
  int decay_every = 15;  // epochs
  int batch_size = 256;
  int epochs = 60;
  std::uint64_t seed = 0;
};

// lr(e) = lr0 * decay^floor(e / decay_every)
double lr_at(const TrainSchedule& schedule, int epoch);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<std::array<long, 2>, 2> confusion{};  // [truth][prediction]
};

// Fold-mean aggregate: unweighted means of the per-fold scalars. Kept as a
// separate type because a mean cannot satisfy the per-report consistency
// between f1 and precision/recall.
struct MeanMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

MetricsReport metrics_from_confusion(const std::array<std::array<long, 2>, 2>& confusion);

// Per-subject relabeling of 1..9 scores into high/low classes. joint2d runs
// one k-means (k=2) on the (valence, arousal) points; per_dimension runs an
// independent 1D clustering per axis. Thresholds are the midpoints of the
// two cluster centers; degenerate clusterings fall back to threshold 5.
// Scores exactly at the threshold map to the low class.
enum class RelabelMode { joint2d, per_dimension };

struct RelabelResult {
  std::map<std::string, BinaryLabels> labels;  // by stimulus_id
  double v_thr = 5.0;
  double a_thr = 5.0;
};

RelabelResult relabel_subject(const std::vector<AnnotationRecord>& records,
                              RelabelMode mode = RelabelMode::joint2d);

// Deterministic shuffled round-robin partition of the (sorted, deduplicated)
// subject set into k folds whose sizes differ by at most one.
FoldPlan make_fold_plan(const std::vector<std::string>& subjects, int k,
                        std::uint64_t seed);

// trim 3 s -> decompose -> per-channel z-score -> per-channel linear
// resample; returns the row-major 3 x input_len matrix (origin, phasic,
// tonic row order).
std::vector<double> preprocess(const EdaTrace& trace, const cvx::BatemanIrf& irf,
                               const cvx::CvxedaConfig& cvx_cfg, int input_len);

// Joins traces, annotations and optional stimulus features into training
// examples (relabeling per subject, preprocessing every trace; `jobs`
// bounds the preprocessing parallelism).
std::vector<LabeledExample> assemble_dataset(
    const std::vector<EdaTrace>& traces,
    const std::vector<AnnotationRecord>& annotations,
    const std::vector<StimulusFeatures>& features, const cvx::BatemanIrf& irf,
    const cvx::CvxedaConfig& cvx_cfg, int input_len,
    RelabelMode mode = RelabelMode::joint2d, int jobs = 1);

struct TrainResult {
  std::vector<double> epoch_loss;
};

// Seeded mini-batch SGD with cross-entropy on the softmax outputs and the
// step-decay schedule; same seed and data give bit-identical parameters.
TrainResult train(net::RtcanModel& model, std::span<const LabeledExample> train_set,
                  const TrainSchedule& schedule, int fold_id, Dim dim);

MetricsReport evaluate(net::RtcanModel& model, std::span<const LabeledExample> test_set,
                       Dim dim);

struct CvResult {
  std::vector<MetricsReport> per_fold;
  std::vector<TrainResult> per_fold_training;
  MeanMetrics mean;
};

// Trains one model replica per fold on the nine complementary folds and
// tests on the held-out one; asserts subject disjointness at runtime and
// throws LeakageDetected on a corrupted plan. Folds run in parallel up to
// `jobs` threads.
CvResult cross_validate(const std::vector<LabeledExample>& dataset,
                        const net::RtcanConfig& config, const TrainSchedule& schedule,
                        const FoldPlan& plan, Dim dim, int jobs = 1);

struct PearsonResult {
  double r = 0.0;
  double t_stat = 0.0;  // r * sqrt((n-2)/(1-r^2)), significance proxy
};

PearsonResult pearson_r(std::span<const double> a, std::span<const double> b);

// Linear SVM on the flattened origin+phasic+tonic channels, trained with
// deterministic full-batch subgradient descent on the C-weighted hinge
// loss plus 1/2 ||w||^2; evaluated with the same semantics as `evaluate`.
MetricsReport svm_baseline(std::span<const LabeledExample> train_set,
                           std::span<const LabeledExample> test_set, Dim dim,
                           double C = 0.25, int iterations = 2000);

}  // namespace rtcan::pipe
