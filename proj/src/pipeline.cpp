#include "rtcan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "rtcan/errors.hpp"
#include "rtcan/rng.hpp"
#include "rtcan/signal.hpp"

namespace rtcan::pipe {

using ag::Tape;
using ag::Tensor;

const char* to_string(Dim dim) {
  return dim == Dim::valence ? "valence" : "arousal";
}

double lr_at(const TrainSchedule& schedule, int epoch) {
  return schedule.lr0 *
         std::pow(schedule.decay, std::floor(static_cast<double>(epoch) /
                                             schedule.decay_every));
}

MetricsReport metrics_from_confusion(const std::array<std::array<long, 2>, 2>& confusion) {
  MetricsReport m;
  m.confusion = confusion;
  const long tp = confusion[1][1], tn = confusion[0][0];
  const long fp = confusion[0][1], fn = confusion[1][0];
  const long total = tp + tn + fp + fn;
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

namespace {

struct Point2 {
  double v = 0.0, a = 0.0;
};

// Lexicographic order by (v+a, v, a): shift-equivariant and total, used to
// pick deterministic initial centers.
bool sum_less(const Point2& x, const Point2& y) {
  const double sx = x.v + x.a, sy = y.v + y.a;
  if (sx != sy) return sx < sy;
  if (x.v != y.v) return x.v < y.v;
  return x.a < y.a;
}

// k=2 Lloyd iterations to convergence; returns false on a degenerate
// clustering (identical points or an empty cluster).
bool kmeans2(const std::vector<Point2>& pts, Point2& c0, Point2& c1) {
  const Point2 lo = *std::min_element(pts.begin(), pts.end(), sum_less);
  const Point2 hi = *std::max_element(pts.begin(), pts.end(), sum_less);
  if (lo.v == hi.v && lo.a == hi.a) return false;  // all points identical
  c0 = lo;
  c1 = hi;
  std::vector<int> assign(pts.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d0 = (pts[i].v - c0.v) * (pts[i].v - c0.v) +
                        (pts[i].a - c0.a) * (pts[i].a - c0.a);
      const double d1 = (pts[i].v - c1.v) * (pts[i].v - c1.v) +
                        (pts[i].a - c1.a) * (pts[i].a - c1.a);
      const int cluster = d1 < d0 ? 1 : 0;
      if (cluster != assign[i]) {
        assign[i] = cluster;
        changed = true;
      }
    }
    Point2 m0{}, m1{};
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (assign[i] == 0) {
        m0.v += pts[i].v;
        m0.a += pts[i].a;
        ++n0;
      } else {
        m1.v += pts[i].v;
        m1.a += pts[i].a;
        ++n1;
      }
    }
    if (n0 == 0 || n1 == 0) return false;
    c0 = {m0.v / n0, m0.a / n0};
    c1 = {m1.v / n1, m1.a / n1};
    if (!changed) break;
  }
  return true;
}

// 1D specialization for the per-dimension relabel mode.
bool kmeans1(const std::vector<double>& xs, double& c0, double& c1) {
  const double lo = *std::min_element(xs.begin(), xs.end());
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (lo == hi) return false;
  c0 = lo;
  c1 = hi;
  std::vector<int> assign(xs.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const int cluster = std::abs(xs[i] - c1) < std::abs(xs[i] - c0) ? 1 : 0;
      if (cluster != assign[i]) {
        assign[i] = cluster;
        changed = true;
      }
    }
    double m0 = 0.0, m1 = 0.0;
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      (assign[i] == 0 ? m0 : m1) += xs[i];
      ++(assign[i] == 0 ? n0 : n1);
    }
    if (n0 == 0 || n1 == 0) return false;
    c0 = m0 / n0;
    c1 = m1 / n1;
    if (!changed) break;
  }
  return true;
}

void run_jobs(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RelabelResult relabel_subject(const std::vector<AnnotationRecord>& records,
                              RelabelMode mode) {
  if (records.size() < 2) {
    fail(Err::TooFew, "relabeling needs at least 2 records per subject");
  }
  RelabelResult out;
  if (mode == RelabelMode::joint2d) {
    std::vector<Point2> pts;
    pts.reserve(records.size());
    for (const auto& r : records) pts.push_back({r.valence, r.arousal});
    Point2 c0, c1;
    if (kmeans2(pts, c0, c1)) {
      out.v_thr = 0.5 * (c0.v + c1.v);
      out.a_thr = 0.5 * (c0.a + c1.a);
    }
  } else {
    std::vector<double> vs, as;
    for (const auto& r : records) {
      vs.push_back(r.valence);
      as.push_back(r.arousal);
    }
    double c0, c1;
    if (kmeans1(vs, c0, c1)) out.v_thr = 0.5 * (c0 + c1);
    if (kmeans1(as, c0, c1)) out.a_thr = 0.5 * (c0 + c1);
  }
  for (const auto& r : records) {
    BinaryLabels labels;
    labels.valence_class = r.valence > out.v_thr ? 1 : 0;
    labels.arousal_class = r.arousal > out.a_thr ? 1 : 0;
    out.labels[r.stimulus_id] = labels;
  }
  return out;
}

FoldPlan make_fold_plan(const std::vector<std::string>& subjects, int k,
                        std::uint64_t seed) {
  std::vector<std::string> uniq(subjects);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) < k) {
    fail(Err::TooFew, std::to_string(uniq.size()) + " subjects cannot fill " +
                          std::to_string(k) + " folds");
  }
  Rng rng(seed);
  rng.shuffle(uniq);
  FoldPlan plan;
  plan.folds.assign(static_cast<std::size_t>(k), {});
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    plan.folds[i % static_cast<std::size_t>(k)].push_back(uniq[i]);
  }
  return plan;
}

std::vector<double> preprocess(const EdaTrace& trace, const cvx::BatemanIrf& irf,
                               const cvx::CvxedaConfig& cvx_cfg, int input_len) {
  const EdaTrace trimmed = trim_head(trace, 3.0);
  const DecomposedEda dec = cvx::decompose(trimmed, irf, cvx_cfg);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(3 * input_len));
  for (const auto* channel : {&dec.origin, &dec.phasic, &dec.tonic}) {
    const auto z = zscore(*channel);
    const auto r = resample_linear(z, input_len);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

std::vector<LabeledExample> assemble_dataset(
    const std::vector<EdaTrace>& traces,
    const std::vector<AnnotationRecord>& annotations,
    const std::vector<StimulusFeatures>& features, const cvx::BatemanIrf& irf,
    const cvx::CvxedaConfig& cvx_cfg, int input_len, RelabelMode mode, int jobs) {
  std::map<std::string, std::vector<AnnotationRecord>> by_subject;
  for (const auto& a : annotations) by_subject[a.subject_id].push_back(a);
  std::map<std::string, std::map<std::string, BinaryLabels>> labels;
  for (const auto& [subject, records] : by_subject) {
    labels[subject] = relabel_subject(records, mode).labels;
  }
  std::map<std::string, const StimulusFeatures*> feats;
  std::size_t feat_dim = features.empty() ? 0 : features[0].vector.size();
  for (const auto& f : features) {
    if (f.vector.size() != feat_dim) {
      fail(Err::ShapeMismatch, "stimulus feature rows must share one dimension");
    }
    feats[f.stimulus_id] = &f;
  }

  std::vector<LabeledExample> out(traces.size());
  run_jobs(static_cast<int>(traces.size()), jobs, [&](int i) {
    const auto& trace = traces[static_cast<std::size_t>(i)];
    LabeledExample ex;
    ex.subject_id = trace.subject_id;
    ex.stimulus_id = trace.stimulus_id;
    ex.length = input_len;
    ex.channels = preprocess(trace, irf, cvx_cfg, input_len);
    const auto subject_it = labels.find(trace.subject_id);
    if (subject_it == labels.end() ||
        subject_it->second.find(trace.stimulus_id) == subject_it->second.end()) {
      fail(Err::BadLabel, "no annotation for trace " + trace.subject_id + "/" +
                              trace.stimulus_id);
    }
    ex.labels = subject_it->second.at(trace.stimulus_id);
    if (!features.empty()) {
      const auto f = feats.find(trace.stimulus_id);
      if (f == feats.end()) {
        fail(Err::BadLabel, "no stimulus features for " + trace.stimulus_id);
      }
      ex.music = f->second->vector;
    }
    out[static_cast<std::size_t>(i)] = std::move(ex);
  });
  return out;
}

namespace {

int label_of(const LabeledExample& ex, Dim dim) {
  return dim == Dim::valence ? ex.labels.valence_class : ex.labels.arousal_class;
}

struct Batch {
  Tensor x;
  std::optional<Tensor> music;
  std::vector<int> labels;
};

Batch make_batch(std::span<const LabeledExample> examples,
                 std::span<const int> indices, Dim dim, int music_dim) {
  const int B = static_cast<int>(indices.size());
  const int L = examples[static_cast<std::size_t>(indices[0])].length;
  Batch batch;
  batch.x = Tensor::zeros({B, 3, L});
  if (music_dim > 0) batch.music = Tensor::zeros({B, music_dim});
  batch.labels.resize(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const auto& ex = examples[static_cast<std::size_t>(indices[static_cast<std::size_t>(b)])];
    if (ex.length != L || static_cast<int>(ex.channels.size()) != 3 * L) {
      fail(Err::ShapeMismatch, "examples in a batch must share the input length");
    }
    std::copy(ex.channels.begin(), ex.channels.end(),
              batch.x.data() + static_cast<std::ptrdiff_t>(b) * 3 * L);
    if (music_dim > 0) {
      if (!ex.music || static_cast<int>(ex.music->size()) != music_dim) {
        fail(Err::ShapeMismatch, "example lacks the configured stimulus features");
      }
      std::copy(ex.music->begin(), ex.music->end(),
                batch.music->data() + static_cast<std::ptrdiff_t>(b) * music_dim);
    }
    batch.labels[static_cast<std::size_t>(b)] = label_of(ex, dim);
  }
  return batch;
}

}  // namespace

TrainResult train(net::RtcanModel& model, std::span<const LabeledExample> train_set,
                  const TrainSchedule& schedule, int fold_id, Dim dim) {
  if (train_set.empty()) fail(Err::EmptySet, "train: empty training set");
  if (schedule.lr0 <= 0.0 || schedule.decay <= 0.0 || schedule.decay > 1.0 ||
      schedule.batch_size < 1 || schedule.epochs < 1) {
    fail(Err::BadParams, "train: bad schedule");
  }
  for (const auto& ex : train_set) {
    const int l = label_of(ex, dim);
    if (l != 0 && l != 1) fail(Err::BadLabel, "train labels must be 0/1");
  }
  auto params = model.parameters();
  Rng rng(mix_seed(schedule.seed, 0xF01D + static_cast<std::uint64_t>(fold_id)));
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult result;
  const int music_dim = model.config().music_dim;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      const std::span<const int> idx(order.data() + start, end - start);
      Batch batch = make_batch(train_set, idx, dim, music_dim);
      Tape tape;
      Tensor probs = model.forward(batch.x, batch.music, /*train=*/true, &tape);
      Tensor loss = ag::cross_entropy(probs, batch.labels, &tape);
      tape.backward(loss);
      ag::sgd_step(params, lr);
      loss_sum += loss.item();
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / batches);
  }
  return result;
}

MetricsReport evaluate(net::RtcanModel& model, std::span<const LabeledExample> test_set,
                       Dim dim) {
  if (test_set.empty()) fail(Err::EmptySet, "evaluate: empty test set");
  const int music_dim = model.config().music_dim;
  std::array<std::array<long, 2>, 2> confusion{};
  constexpr std::size_t kChunk = 64;
  std::vector<int> idx;
  for (std::size_t start = 0; start < test_set.size(); start += kChunk) {
    const std::size_t end = std::min(test_set.size(), start + kChunk);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(i));
    Batch batch = make_batch(test_set, idx, dim, music_dim);
    Tensor probs = model.forward(batch.x, batch.music, /*train=*/false, nullptr);
    const int C = probs.size(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double* row = probs.data() + static_cast<std::ptrdiff_t>(b) * C;
      int pred = 0;  // ties resolve toward class 0
      for (int c = 1; c < C; ++c) {
        if (row[c] > row[pred]) pred = c;
      }
      const int truth = batch.labels[b];
      ++confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(std::min(pred, 1))];
    }
  }
  return metrics_from_confusion(confusion);
}

CvResult cross_validate(const std::vector<LabeledExample>& dataset,
                        const net::RtcanConfig& config, const TrainSchedule& schedule,
                        const FoldPlan& plan, Dim dim, int jobs) {
  if (dataset.empty()) fail(Err::EmptySet, "cross_validate: empty dataset");
  const int k = static_cast<int>(plan.folds.size());
  if (k < 2) fail(Err::BadParams, "cross_validate: need >= 2 folds");

  std::set<std::string> seen;
  for (const auto& fold : plan.folds) {
    for (const auto& s : fold) {
      if (!seen.insert(s).second) {
        fail(Err::LeakageDetected, "subject '" + s + "' appears in two folds");
      }
    }
  }
  for (const auto& ex : dataset) {
    if (seen.find(ex.subject_id) == seen.end()) {
      fail(Err::BadConfig, "subject '" + ex.subject_id + "' missing from the fold plan");
    }
  }

  CvResult result;
  result.per_fold.resize(static_cast<std::size_t>(k));
  result.per_fold_training.resize(static_cast<std::size_t>(k));
  run_jobs(k, jobs, [&](int fold) {
    const std::set<std::string> test_subjects(
        plan.folds[static_cast<std::size_t>(fold)].begin(),
        plan.folds[static_cast<std::size_t>(fold)].end());
    std::vector<LabeledExample> train_set, test_set;
    std::set<std::string> train_subjects;
    for (const auto& ex : dataset) {
      if (test_subjects.count(ex.subject_id)) {
        test_set.push_back(ex);
      } else {
        train_set.push_back(ex);
        train_subjects.insert(ex.subject_id);
      }
    }
    for (const auto& s : train_subjects) {
      if (test_subjects.count(s)) {
        fail(Err::LeakageDetected, "subject '" + s + "' on both sides of fold " +
                                       std::to_string(fold));
      }
    }
    if (train_set.empty() || test_set.empty()) {
      fail(Err::EmptySet, "fold " + std::to_string(fold) + " has an empty side");
    }
    net::RtcanModel model(config, mix_seed(schedule.seed, 0x39D7 + static_cast<std::uint64_t>(fold)));
    result.per_fold_training[static_cast<std::size_t>(fold)] =
        train(model, train_set, schedule, fold, dim);
    result.per_fold[static_cast<std::size_t>(fold)] = evaluate(model, test_set, dim);
  });

  for (const auto& m : result.per_fold) {
    result.mean.accuracy += m.accuracy / k;
    result.mean.precision += m.precision / k;
    result.mean.recall += m.recall / k;
    result.mean.f1 += m.f1 / k;
  }
  return result;
}

PearsonResult pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(Err::ShapeMismatch, "pearson_r: length mismatch");
  const std::size_t n = a.size();
  if (n < 3) fail(Err::TooShort, "pearson_r needs length >= 3");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    fail(Err::Degenerate, "pearson_r: constant input");
  }
  PearsonResult out;
  out.r = sab / std::sqrt(saa * sbb);
  const double denom = 1.0 - out.r * out.r;
  out.t_stat = denom > 0.0
                   ? out.r * std::sqrt(static_cast<double>(n - 2) / denom)
                   : std::numeric_limits<double>::infinity() * (out.r > 0 ? 1 : -1);
  return out;
}

MetricsReport svm_baseline(std::span<const LabeledExample> train_set,
                           std::span<const LabeledExample> test_set, Dim dim,
                           double C, int iterations) {
  if (train_set.empty() || test_set.empty()) {
    fail(Err::EmptySet, "svm_baseline: empty split");
  }
  const std::size_t feat = train_set[0].channels.size();
  for (const auto& ex : train_set) {
    if (ex.channels.size() != feat) {
      fail(Err::ShapeMismatch, "svm features must share one length");
    }
  }
  std::vector<double> w(feat, 0.0);
  double bias = 0.0;
  std::vector<double> gw(feat);
  for (int it = 0; it < iterations; ++it) {
    // J = 1/2 ||w||^2 + C * sum hinge; deterministic full-batch subgradient.
    std::copy(w.begin(), w.end(), gw.begin());
    double gb = 0.0;
    for (const auto& ex : train_set) {
      const double y = label_of(ex, dim) == 1 ? 1.0 : -1.0;
      double margin = bias;
      for (std::size_t i = 0; i < feat; ++i) margin += w[i] * ex.channels[i];
      if (y * margin < 1.0) {
        for (std::size_t i = 0; i < feat; ++i) gw[i] -= C * y * ex.channels[i];
        gb -= C * y;
      }
    }
    const double lr = 1.0 / (1.0 + 0.05 * it);
    for (std::size_t i = 0; i < feat; ++i) w[i] -= lr * 0.01 * gw[i];
    bias -= lr * 0.01 * gb;
  }

  std::array<std::array<long, 2>, 2> confusion{};
  for (const auto& ex : test_set) {
    if (ex.channels.size() != feat) {
      fail(Err::ShapeMismatch, "svm test features must match training length");
    }
    double margin = bias;
    for (std::size_t i = 0; i < feat; ++i) margin += w[i] * ex.channels[i];
    const int pred = margin > 0.0 ? 1 : 0;
    ++confusion[static_cast<std::size_t>(label_of(ex, dim))][static_cast<std::size_t>(pred)];
  }
  return metrics_from_confusion(confusion);
}

}  // namespace rtcan::pipe
