// Acceptance suite: one line per criterion, exit 0 only when every gating
// criterion passes. Individual criteria can be run as `rtcan_acceptance 3 5`.
//
//   1. gradient correctness (operators 1e-4, end-to-end 1e-3, >= 20 seeds)
//   2. decomposition oracle recovery on 50 synthetic traces at >= 20 dB SNR
//   3. solver discipline: monotone objective + N=5 lattice oracle match
//   4. attention structure: shapes, identity init, affinity rows, ablation grid
//   5. end-to-end subject-independent CV on the default synthetic corpus
//   6. pipeline integrity: leakage trip-wire, relabel example, lr schedule
//   7. linear-SVM baseline + metrics internal consistency
//   8. saliency determinism, normalization and rescaling invariance
//   9. optional licensed-data run (skipped unless RTCAN_REAL_DATA_DIR is set)

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rtcan/checkpoint.hpp"
#include "rtcan/csv.hpp"
#include "rtcan/cvxeda.hpp"
#include "rtcan/errors.hpp"
#include "rtcan/gradcam.hpp"
#include "rtcan/model.hpp"
#include "rtcan/ops.hpp"
#include "rtcan/pipeline.hpp"
#include "rtcan/rng.hpp"
#include "rtcan/signal.hpp"
#include "rtcan/synth.hpp"

using namespace rtcan;
using ag::Tape;
using ag::Tensor;

namespace {

struct Failure {
  std::string detail;
};

void expect(bool ok, const std::string& detail) {
  if (!ok) throw Failure{detail};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Tensor randn(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

// Every MetricsReport produced anywhere in this run lands here and is
// checked for internal consistency under criterion 7.
std::vector<pipe::MetricsReport> g_emitted_reports;

void collect(const pipe::MetricsReport& m) { g_emitted_reports.push_back(m); }

// ---------------------------------------------------------------------------
// 1. gradient correctness
// ---------------------------------------------------------------------------

void criterion_gradients() {
  constexpr double kOpTol = 1e-4;
  constexpr double kEndTol = 1e-3;
  double worst_op = 0.0, worst_end = 0.0;

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    auto track = [&](double err) { worst_op = std::max(worst_op, err); };

    {  // conv1d wrt all three inputs
      const int stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(2);
      Tensor x = randn({2, 2, 6}, rng), w = randn({3, 2, 3}, rng), b = randn({3}, rng);
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::conv1d(v, w, b, stride, pad, &t), &t), &t);
          },
          x, 1e-5));
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::conv1d(x, v, b, stride, pad, &t), &t), &t);
          },
          w, 1e-5));
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::conv1d(x, w, v, stride, pad, &t), &t), &t);
          },
          b, 1e-5));
    }
    {  // batchnorm (both modes) wrt x, gamma, beta
      Tensor x = randn({2, 2, 4}, rng), gm = randn({2}, rng), bt = randn({2}, rng);
      for (bool train : {true, false}) {
        auto run = [&](const Tensor& xx, const Tensor& g, const Tensor& be, Tape& t) {
          Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
          return ag::sum(ag::batchnorm1d(xx, g, be, rm, rv, train, 0.1, 1e-3, &t), &t);
        };
        track(ag::finite_diff_check(
            [&](Tensor& v, Tape& t) { return run(v, gm, bt, t); }, x, 1e-5));
        track(ag::finite_diff_check(
            [&](Tensor& v, Tape& t) { return run(x, v, bt, t); }, gm, 1e-5));
        track(ag::finite_diff_check(
            [&](Tensor& v, Tape& t) { return run(x, gm, v, t); }, bt, 1e-5));
      }
    }
    {  // dense -> softmax -> cross-entropy
      Tensor x = randn({2, 3}, rng), w = randn({3, 3}, rng), b = randn({3}, rng);
      std::vector<int> labels{rng.uniform_int(3), rng.uniform_int(3)};
      auto run = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb, Tape& t) {
        return ag::cross_entropy(
            ag::softmax_lastdim(ag::dense(xx, ww, bb, &t), &t), labels, &t);
      };
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) { return run(v, w, b, t); }, x, 1e-5));
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) { return run(x, v, b, t); }, w, 1e-5));
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) { return run(x, w, v, t); }, b, 1e-5));
    }
    {  // relu / avgpool / matmul / transpose / concat+slice / scale / mul
      Tensor x = randn({2, 4, 6}, rng);
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::relu(ag::avgpool1d(v, 2, 2, &t), &t), &t);
          },
          x, 1e-5));
      Tensor a = randn({2, 3, 4}, rng), m = randn({2, 4, 2}, rng);
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::matmul_batched(v, m, &t), &t), &t);
          },
          a, 1e-5));
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::matmul_batched(a, v, &t), &t), &t);
          },
          m, 1e-5));
      Tensor sq = randn({1, 3, 3}, rng);
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            Tensor joined = ag::concat({ag::transpose12(v, &t), v}, 1, &t);
            return ag::sum(ag::sigmoid(ag::slice(joined, 1, 2, 3, &t), &t), &t);
          },
          sq, 1e-5));
      Tensor gate = randn({2, 4}, rng);
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::scale_channels(x, v, &t), &t), &t);
          },
          gate, 1e-5));
      Tensor other = randn({2, 4, 6}, rng);
      track(ag::finite_diff_check(
          [&](Tensor& v, Tape& t) {
            return ag::sum(ag::sigmoid(ag::mul(v, other, &t), &t), &t);
          },
          other, 1e-5));
    }
    expect(worst_op < kOpTol, "operator gradient error " + fmt(worst_op) + " at seed " +
                                  std::to_string(seed));

    // tiny end-to-end network: L=24, 4 channels
    net::RtcanConfig cfg;
    cfg.input_len = 24;
    cfg.stem_out_channels = 4;
    cfg.reduction_ratio = 2;
    cfg.rfe_channels = {4, 4, 4, 4};
    cfg.classifier_hidden = {8, 6};
    cfg.music_dim = 0;
    net::RtcanModel model(cfg, seed);
    Tensor x = randn({2, 3, 24}, rng);
    const std::vector<int> labels{static_cast<int>(seed % 2), 1};
    auto loss_fn = [&](Tensor& v, Tape& t) {
      return ag::cross_entropy(model.forward(v, std::nullopt, true, &t), labels, &t);
    };
    worst_end = std::max(worst_end, ag::finite_diff_check(loss_fn, x, 1e-5));
    auto via = [&](Tensor& p) {
      return ag::finite_diff_check(
          [&](Tensor&, Tape& t) {
            return ag::cross_entropy(model.forward(x, std::nullopt, true, &t), labels, &t);
          },
          p, 1e-5);
    };
    worst_end = std::max(worst_end, via(model.rnta().theta_w));
    worst_end = std::max(worst_end, via(model.sca().w0));
    expect(worst_end < kEndTol, "end-to-end gradient error " + fmt(worst_end) +
                                    " at seed " + std::to_string(seed));
  }
  std::cout << "      worst operator error " << fmt(worst_op)
            << ", worst end-to-end error " << fmt(worst_end) << "\n";
}

// ---------------------------------------------------------------------------
// 2 & 3. decomposition recovery + solver discipline (share the 50 solves)
// ---------------------------------------------------------------------------

// The 50 seed-fixed specs shared by criteria 2 and 3. Noise is sized from
// the noiseless phasic RMS of the same seed so every trace sits at ~21.6 dB
// SNR (above the stated 20 dB floor).
std::vector<synth::SynthSpec> recovery_specs() {
  const cvx::BatemanIrf irf;
  std::vector<synth::SynthSpec> specs;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    synth::SynthSpec spec;
    spec.scr_rate_hz = seed % 2 == 0 ? 0.25 : 0.12;
    spec.seed = seed;
    spec.noise_std = 0.0;
    auto [trace, truth] = synth::gen_trace(spec, irf);
    double rss = 0.0;
    for (double v : truth.true_phasic) rss += v * v;
    const double rms = std::sqrt(rss / static_cast<double>(truth.true_phasic.size()));
    spec.noise_std = std::max(rms, 1e-6) / 12.0;
    specs.push_back(spec);
  }
  return specs;
}

void criterion_cvxeda_recovery() {
  const cvx::BatemanIrf irf;
  cvx::CvxedaConfig cfg;
  int spikes_total = 0, spikes_found = 0;
  double worst_snr_db = 1e9;

  for (const auto& spec : recovery_specs()) {
    auto [trace, truth] = synth::gen_trace(spec, irf);
    const std::uint64_t seed = spec.seed;

    // verify the advertised SNR from the exactly-known noise component
    double sig = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
      sig += truth.true_phasic[i] * truth.true_phasic[i];
      const double n = trace.samples[i] - truth.true_phasic[i] - truth.true_tonic[i];
      noise += n * n;
    }
    const double snr_db = 10.0 * std::log10(sig / noise);
    worst_snr_db = std::min(worst_snr_db, snr_db);
    expect(snr_db >= 20.0, "trace " + std::to_string(seed) + " below 20 dB SNR");

    const auto dec = cvx::decompose(trace, irf, cfg);

    // (a) reconstruction identity, exact in the construction's association
    for (std::size_t i = 0; i < dec.origin.size(); ++i) {
      expect(dec.residual[i] == dec.origin[i] - dec.phasic[i] - dec.tonic[i],
             "reconstruction identity broken at trace " + std::to_string(seed));
      // (b) non-negativity, exact
      expect(dec.driver[i] >= 0.0, "negative driver at trace " + std::to_string(seed));
    }

    // (c) spike recovery within +-0.5 s
    double peak = 0.0;
    for (double v : dec.driver) peak = std::max(peak, v);
    std::vector<int> maxima;
    for (int i = 0; i < static_cast<int>(dec.driver.size()); ++i) {
      const double v = dec.driver[static_cast<std::size_t>(i)];
      if (v <= 0.05 * peak) continue;
      const double l = i > 0 ? dec.driver[static_cast<std::size_t>(i - 1)] : -1;
      const double r = i + 1 < static_cast<int>(dec.driver.size())
                           ? dec.driver[static_cast<std::size_t>(i + 1)]
                           : -1;
      if (v >= l && v >= r) maxima.push_back(i);
    }
    for (double t : truth.spike_times_s) {
      ++spikes_total;
      for (int i : maxima) {
        if (std::abs(i / spec.sampling_hz - t) <= 0.5) {
          ++spikes_found;
          break;
        }
      }
    }

    // (d) residual RMS at most twice the injected noise RMS
    double rss = 0.0, nss = 0.0;
    for (std::size_t i = 0; i < dec.residual.size(); ++i) {
      rss += dec.residual[i] * dec.residual[i];
      const double nv = trace.samples[i] - truth.true_phasic[i] - truth.true_tonic[i];
      nss += nv * nv;
    }
    const double res_rms = std::sqrt(rss / static_cast<double>(dec.residual.size()));
    const double noise_rms = std::sqrt(nss / static_cast<double>(dec.residual.size()));
    expect(res_rms <= 2.0 * noise_rms,
           "residual rms " + fmt(res_rms) + " above twice the noise at trace " +
               std::to_string(seed));
  }

  // (e) constant traces keep phasic mass below 1e-3 of the level
  for (double level : {1.0, 3.5, 10.0}) {
    EdaTrace trace;
    trace.subject_id = "const";
    trace.stimulus_id = std::to_string(level);
    trace.sampling_hz = 8.0;
    trace.samples.assign(512, level);
    const auto dec = cvx::decompose(trace, irf, cfg);
    for (double v : dec.phasic) {
      expect(std::abs(v) < 1e-3 * level, "phasic mass on a constant trace");
    }
  }

  const double rate = static_cast<double>(spikes_found) / spikes_total;
  expect(rate >= 0.90, "spike recovery " + fmt(rate) + " below 0.90");
  std::cout << "      spike recovery " << fmt(100.0 * rate) << "% (" << spikes_found
            << "/" << spikes_total << "), worst SNR " << fmt(worst_snr_db) << " dB\n";
}

void criterion_solver_discipline() {
  // re-solve the synthetic corpus of criterion 2 and inspect the traces
  // (solve_qp uses the same min-anchoring decompose applies)
  const cvx::BatemanIrf irf;
  cvx::CvxedaConfig cfg;
  std::size_t solves = 0;
  for (const auto& spec : recovery_specs()) {
    auto [trace, truth] = synth::gen_trace(spec, irf);
    std::vector<double> y = trace.samples;
    const double shift = *std::min_element(y.begin(), y.end());
    for (double& v : y) v -= shift;
    const auto kernel = cvx::sample_irf(irf, spec.sampling_hz);
    cvx::PhasicOperator H(kernel, static_cast<int>(y.size()));
    const auto basis = cvx::build_tonic_basis(static_cast<int>(y.size()),
                                              spec.sampling_hz, cfg.knot_spacing_s);
    const auto sol = cvx::solve_qp(y, H, basis, cfg);
    ++solves;
    expect(sol.converged, "solver failed to converge on a synthetic trace");
    for (std::size_t i = 1; i < sol.objective_trace.size(); ++i) {
      expect(sol.objective_trace[i] <= sol.objective_trace[i - 1] + 1e-9,
             "objective increased by " +
                 fmt(sol.objective_trace[i] - sol.objective_trace[i - 1]));
    }
  }

  // N=5 lattice oracle: multi-stage dense grid search over p >= 0 with the
  // tonic coefficients eliminated by an independent dense solve.
  cvx::BatemanIrf tiny_irf{0.3, 0.6, 3.0};
  const auto h = cvx::sample_irf(tiny_irf, 1.0);
  const int n = 5;
  cvx::PhasicOperator H(h, n);
  const auto basis = cvx::build_tonic_basis(n, 1.0, 2.0);
  std::vector<double> p_true(static_cast<std::size_t>(n), 0.0);
  p_true[1] = 0.8;
  auto y = H.apply(p_true);
  for (double& v : y) v += 0.3;
  cvx::CvxedaConfig tiny_cfg;
  tiny_cfg.alpha = 0.05;
  const auto sol = cvx::solve_qp(y, H, basis, tiny_cfg);
  expect(sol.converged, "N=5 instance did not converge");

  auto oracle_obj = [&](const std::vector<double>& p) {
    // independent evaluation: direct convolution + Gaussian elimination
    std::vector<double> hp(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < static_cast<int>(h.size()) && j + k < n; ++k) {
        hp[static_cast<std::size_t>(j + k)] +=
            h[static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(j)];
      }
    }
    const int m = basis.kb + 2;
    auto col = [&](int j, int i) {
      return j < basis.kb ? basis.B[static_cast<std::size_t>(i) * basis.kb + j]
                          : basis.C[static_cast<std::size_t>(i) * 2 + (j - basis.kb)];
    };
    std::vector<double> a(static_cast<std::size_t>(m) * (m + 1), 0.0);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += col(r, i) * col(c, i);
        if (r == c && r < basis.kb) s += tiny_cfg.gamma;
        a[static_cast<std::size_t>(r) * (m + 1) + c] = s;
      }
      double rhs = 0.0;
      for (int i = 0; i < n; ++i) {
        rhs += col(r, i) *
               (y[static_cast<std::size_t>(i)] - hp[static_cast<std::size_t>(i)]);
      }
      a[static_cast<std::size_t>(r) * (m + 1) + m] = rhs;
    }
    for (int c = 0; c < m; ++c) {
      int piv = c;
      for (int r = c + 1; r < m; ++r) {
        if (std::abs(a[static_cast<std::size_t>(r) * (m + 1) + c]) >
            std::abs(a[static_cast<std::size_t>(piv) * (m + 1) + c])) {
          piv = r;
        }
      }
      for (int k = 0; k <= m; ++k) {
        std::swap(a[static_cast<std::size_t>(c) * (m + 1) + k],
                  a[static_cast<std::size_t>(piv) * (m + 1) + k]);
      }
      for (int r = 0; r < m; ++r) {
        if (r == c) continue;
        const double f = a[static_cast<std::size_t>(r) * (m + 1) + c] /
                         a[static_cast<std::size_t>(c) * (m + 1) + c];
        if (f == 0.0) continue;
        for (int k = c; k <= m; ++k) {
          a[static_cast<std::size_t>(r) * (m + 1) + k] -=
              f * a[static_cast<std::size_t>(c) * (m + 1) + k];
        }
      }
    }
    double obj = 0.0;
    std::vector<double> beta(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) {
      beta[static_cast<std::size_t>(r)] =
          a[static_cast<std::size_t>(r) * (m + 1) + m] /
          a[static_cast<std::size_t>(r) * (m + 1) + r];
    }
    for (int i = 0; i < n; ++i) {
      double fit = hp[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)];
      for (int j = 0; j < m; ++j) fit += col(j, i) * beta[static_cast<std::size_t>(j)];
      obj += 0.5 * fit * fit;
    }
    for (int j = 0; j < basis.kb; ++j) {
      obj += 0.5 * tiny_cfg.gamma * beta[static_cast<std::size_t>(j)] *
             beta[static_cast<std::size_t>(j)];
    }
    for (double v : hp) obj += tiny_cfg.alpha * std::abs(v);
    return obj;
  };

  std::vector<double> center(static_cast<std::size_t>(n), 0.0), best_p = center;
  double best = oracle_obj(best_p);
  double span = 1.2, step = 0.1;
  for (int stage = 0; stage < 4; ++stage) {
    const int ticks = static_cast<int>(std::round(2.0 * span / step)) + 1;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    while (true) {
      std::vector<double> cand(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        cand[static_cast<std::size_t>(i)] =
            std::max(0.0, center[static_cast<std::size_t>(i)] - span +
                              step * idx[static_cast<std::size_t>(i)]);
      }
      const double obj = oracle_obj(cand);
      if (obj < best) {
        best = obj;
        best_p = cand;
      }
      int d = 0;
      while (d < n) {
        if (++idx[static_cast<std::size_t>(d)] < ticks) break;
        idx[static_cast<std::size_t>(d)] = 0;
        ++d;
      }
      if (d == n) break;
    }
    center = best_p;
    span = step;
    step = span / 5.0;
  }

  const double solver_obj = sol.objective_trace.back();
  expect(std::abs(solver_obj - best) <= 1e-4,
         "solver " + fmt(solver_obj) + " vs lattice " + fmt(best));
  std::cout << "      lattice oracle gap " << fmt(std::abs(solver_obj - best))
            << " over " << solves << " monotone solves\n";
}

// ---------------------------------------------------------------------------
// 4. attention structure
// ---------------------------------------------------------------------------

void criterion_attention() {
  Rng rng(4242);

  // randomized configurations: shape preservation + affinity rows + identity
  for (int trial = 0; trial < 8; ++trial) {
    net::RtcanConfig cfg;
    const int channels = 4 * (1 + rng.uniform_int(4));  // 4..16
    cfg.stem_out_channels = channels;
    cfg.reduction_ratio = channels % 4 == 0 ? 4 : 2;
    cfg.rfe_channels = {channels, channels, channels, channels};
    cfg.classifier_hidden = {8, 6};
    cfg.input_len = 6 * (8 + rng.uniform_int(20));  // 48..162, divisible by 6
    cfg.rnta_pool_stride = 2;
    net::RtcanModel model(cfg, static_cast<std::uint64_t>(trial));

    const int T = cfg.stem_out_len() / 3;
    Tensor clip = randn({2, channels, T}, rng);
    const auto sca_out = model.sca_forward(clip, nullptr);
    expect(sca_out.shape() == clip.shape(), "SCA changed the shape");

    Tensor affinity;
    const auto rnta_out = model.rnta_forward(clip, true, nullptr, &affinity);
    expect(rnta_out.shape() == clip.shape(), "RNTA changed the shape");
    expect(rnta_out.vec() == clip.vec(), "RNTA is not the identity at init");

    const int rows = affinity.size(0) * affinity.size(1);
    const int cols = affinity.size(2);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) {
        s += affinity.data()[static_cast<std::ptrdiff_t>(r) * cols + c];
      }
      expect(std::abs(s - 1.0) < 1e-9, "affinity row sums to " + fmt(s));
    }
  }

  // ablation grid reachable by configuration alone; one epoch each
  Rng data_rng(7);
  std::vector<LabeledExample> examples;
  for (int i = 0; i < 24; ++i) {
    LabeledExample ex;
    ex.subject_id = "S" + std::to_string(i % 8);
    ex.stimulus_id = "M" + std::to_string(i);
    ex.length = 48;
    ex.channels.resize(144);
    const int cls = i % 2;
    for (auto& v : ex.channels) v = (cls ? 1.0 : -1.0) + 0.5 * data_rng.normal();
    ex.labels = {cls, cls};
    examples.push_back(std::move(ex));
  }
  for (auto order :
       {net::AttentionOrder::none, net::AttentionOrder::sca_only,
        net::AttentionOrder::rnta_only, net::AttentionOrder::sca_then_rnta,
        net::AttentionOrder::rnta_then_sca, net::AttentionOrder::parallel}) {
    net::RtcanConfig cfg;
    cfg.input_len = 48;
    cfg.stem_out_channels = 8;
    cfg.reduction_ratio = 4;
    cfg.rfe_channels = {8, 8, 8, 8};
    cfg.classifier_hidden = {8, 6};
    cfg.attention_order = order;  // the only knob that changes
    net::RtcanModel model(cfg, 11);
    pipe::TrainSchedule schedule;
    schedule.epochs = 1;
    schedule.batch_size = 8;
    schedule.seed = 11;
    const auto result = pipe::train(model, examples, schedule, 0, pipe::Dim::arousal);
    expect(result.epoch_loss.size() == 1 && std::isfinite(result.epoch_loss[0]),
           std::string("variant ") + net::to_string(order) + " failed to train");
  }
  std::cout << "      8 randomized configs, 6 ablation variants trained\n";
}

// ---------------------------------------------------------------------------
// 5. end-to-end synthetic classification
// ---------------------------------------------------------------------------

void criterion_end_to_end() {
  const int kInputLen = 300;  // runtime budget for a single-core machine
  const int kMusicDim = 8;

  auto ds = synth::gen_dataset(20, 20, synth::default_low_spec(),
                               synth::default_high_spec(), kMusicDim, 42);

  const cvx::BatemanIrf irf;
  const cvx::CvxedaConfig cvx_cfg;
  const auto examples = pipe::assemble_dataset(ds.traces, ds.annotations, ds.features,
                                               irf, cvx_cfg, kInputLen,
                                               pipe::RelabelMode::joint2d, 1);
  std::vector<std::string> subjects;
  for (const auto& ex : examples) subjects.push_back(ex.subject_id);
  const auto plan = pipe::make_fold_plan(subjects, 10, 42);

  pipe::TrainSchedule schedule;
  schedule.epochs = 8;  // well inside the 60-epoch allowance
  schedule.batch_size = 24;
  schedule.lr0 = 0.02;
  schedule.seed = 42;

  // small-scale profile: EDA-only, no in-block gates
  net::RtcanConfig small_cfg;
  small_cfg.input_len = kInputLen;
  small_cfg.sca_in_resblock = false;
  small_cfg.music_dim = 0;
  auto eda_examples = examples;
  for (auto& ex : eda_examples) ex.music.reset();
  const auto small_cv = pipe::cross_validate(eda_examples, small_cfg, schedule, plan,
                                             pipe::Dim::arousal, 1);
  for (const auto& m : small_cv.per_fold) collect(m);

  // large-scale profile: fused stimulus features + in-block gates
  net::RtcanConfig large_cfg;
  large_cfg.input_len = kInputLen;
  large_cfg.sca_in_resblock = true;
  large_cfg.music_dim = kMusicDim;
  const auto large_cv =
      pipe::cross_validate(examples, large_cfg, schedule, plan, pipe::Dim::arousal, 1);
  for (const auto& m : large_cv.per_fold) collect(m);

  std::cout << "      small-scale (EDA-only) mean accuracy " << fmt(small_cv.mean.accuracy)
            << ", large-scale (fused) " << fmt(large_cv.mean.accuracy) << "\n";
  expect(small_cv.mean.accuracy >= 0.90,
         "EDA-only mean accuracy " + fmt(small_cv.mean.accuracy) + " below 0.90");
  expect(large_cv.mean.accuracy >= small_cv.mean.accuracy,
         "fused profile " + fmt(large_cv.mean.accuracy) + " below EDA-only " +
             fmt(small_cv.mean.accuracy));
}

// ---------------------------------------------------------------------------
// 6. pipeline integrity
// ---------------------------------------------------------------------------

void criterion_pipeline_integrity() {
  // deliberately corrupted plan trips the leakage assertion
  std::vector<LabeledExample> examples;
  for (int i = 0; i < 12; ++i) {
    LabeledExample ex;
    ex.subject_id = "S" + std::to_string(i % 6);
    ex.stimulus_id = "M" + std::to_string(i);
    ex.length = 24;
    ex.channels.assign(72, 0.5 * (i % 3));
    ex.labels = {i % 2, i % 2};
    examples.push_back(std::move(ex));
  }
  pipe::FoldPlan corrupted;
  corrupted.folds = {{"S0", "S1", "S2"}, {"S2", "S3", "S4", "S5"}};
  net::RtcanConfig cfg;
  cfg.input_len = 24;
  cfg.stem_out_channels = 4;
  cfg.reduction_ratio = 2;
  cfg.rfe_channels = {4, 4, 4, 4};
  cfg.classifier_hidden = {8, 6};
  pipe::TrainSchedule schedule;
  schedule.epochs = 1;
  bool tripped = false;
  try {
    pipe::cross_validate(examples, cfg, schedule, corrupted, pipe::Dim::arousal, 1);
  } catch (const Error& e) {
    tripped = e.kind() == Err::LeakageDetected;
  }
  expect(tripped, "corrupted fold plan did not raise LeakageDetected");

  // relabel reproduces the bimodal reference example exactly
  std::vector<AnnotationRecord> records{{"S", "A", 1, 1},
                                        {"S", "B", 1, 1},
                                        {"S", "C", 9, 9},
                                        {"S", "D", 9, 9}};
  const auto relabeled = pipe::relabel_subject(records);
  expect(relabeled.v_thr == 5.0 && relabeled.a_thr == 5.0,
         "thresholds (" + fmt(relabeled.v_thr) + "," + fmt(relabeled.a_thr) +
             ") not (5,5)");
  expect(relabeled.labels.at("A").valence_class == 0 &&
             relabeled.labels.at("B").arousal_class == 0 &&
             relabeled.labels.at("C").valence_class == 1 &&
             relabeled.labels.at("D").arousal_class == 1,
         "bimodal example labels wrong");

  // learning-rate schedule closed form at the reference epochs
  pipe::TrainSchedule ref;
  expect(std::abs(pipe::lr_at(ref, 0) - 0.001) < 1e-15, "lr(0) != 0.001");
  expect(std::abs(pipe::lr_at(ref, 15) - 0.0009) < 1e-15, "lr(15) != 0.0009");
  expect(std::abs(pipe::lr_at(ref, 30) - 0.00081) < 1e-15, "lr(30) != 0.00081");
  std::cout << "      leakage trip-wire, relabel example and lr schedule verified\n";
}

// ---------------------------------------------------------------------------
// 7. baseline + metrics consistency
// ---------------------------------------------------------------------------

void criterion_baseline() {
  Rng rng(777);
  std::vector<LabeledExample> train_set, test_set;
  for (int i = 0; i < 80; ++i) {
    LabeledExample ex;
    ex.subject_id = "S" + std::to_string(i % 10);
    ex.stimulus_id = "M" + std::to_string(i);
    ex.length = 10;
    ex.channels.resize(30);
    const int cls = i % 2;
    for (auto& v : ex.channels) v = (cls ? 2.0 : -2.0) + 0.5 * rng.normal();
    ex.labels = {cls, cls};
    (i < 50 ? train_set : test_set).push_back(std::move(ex));
  }
  const auto report = pipe::svm_baseline(train_set, test_set, pipe::Dim::arousal, 0.25);
  collect(report);
  expect(report.accuracy == 1.0,
         "separable SVM accuracy " + fmt(report.accuracy) + " != 1.0");

  expect(!g_emitted_reports.empty(), "no metrics reports were emitted");
  for (const auto& m : g_emitted_reports) {
    const long tp = m.confusion[1][1], tn = m.confusion[0][0];
    const long fp = m.confusion[0][1], fn = m.confusion[1][0];
    const long total = tp + tn + fp + fn;
    expect(total > 0, "empty confusion matrix");
    expect(std::abs(m.accuracy - static_cast<double>(tp + tn) / total) < 1e-12,
           "accuracy inconsistent with the confusion matrix");
    const double f1_ref = (m.precision + m.recall) > 0
                              ? 2 * m.precision * m.recall / (m.precision + m.recall)
                              : 0.0;
    expect(std::abs(m.f1 - f1_ref) < 1e-12, "f1 inconsistent with precision/recall");
  }
  std::cout << "      separable SVM exact, " << g_emitted_reports.size()
            << " emitted reports internally consistent\n";
}

// ---------------------------------------------------------------------------
// 8. saliency
// ---------------------------------------------------------------------------

void criterion_gradcam() {
  net::RtcanConfig cfg;
  cfg.input_len = 96;
  cfg.stem_out_channels = 8;
  cfg.reduction_ratio = 4;
  cfg.rfe_channels = {8, 8, 8, 8};
  cfg.classifier_hidden = {8, 6};
  net::RtcanModel model(cfg, 99);

  Rng rng(98);
  LabeledExample ex;
  ex.subject_id = "S";
  ex.stimulus_id = "M";
  ex.length = cfg.input_len;
  ex.channels.resize(static_cast<std::size_t>(3 * cfg.input_len));
  for (auto& v : ex.channels) v = rng.normal();

  for (cam::Layer layer :
       {cam::Layer::sca_out, cam::Layer::rnta_out, cam::Layer::attention_out}) {
    const auto a = cam::gradcam_1d(model, ex, layer, 1);
    const auto b = cam::gradcam_1d(model, ex, layer, 1);
    expect(a.weights == b.weights, "saliency map is not deterministic");
    expect(static_cast<int>(a.weights.size()) == cfg.input_len,
           "saliency length != input_len");
    double peak = 0.0;
    for (double v : a.weights) {
      expect(v >= 0.0 && v <= 1.0, "saliency weight outside [0,1]");
      peak = std::max(peak, v);
    }
    expect(peak == 0.0 || std::abs(peak - 1.0) < 1e-12,
           "positive map not normalized to max 1");
  }

  const auto base = cam::gradcam_1d(model, ex, cam::Layer::attention_out, 1);
  for (double& v : model.classifier_out_w().vec()) v *= 7.5;
  for (double& v : model.classifier_out_b().vec()) v *= 7.5;
  const auto scaled = cam::gradcam_1d(model, ex, cam::Layer::attention_out, 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < base.weights.size(); ++i) {
    worst = std::max(worst, std::abs(base.weights[i] - scaled.weights[i]));
  }
  expect(worst <= 1e-6, "rescaling moved the map by " + fmt(worst));
  std::cout << "      deterministic, normalized, rescaling drift " << fmt(worst) << "\n";
}

// ---------------------------------------------------------------------------
// 9. optional licensed-data run
// ---------------------------------------------------------------------------

bool criterion_real_data() {  // returns false when skipped
  const char* dir = std::getenv("RTCAN_REAL_DATA_DIR");
  if (!dir) return false;
  const std::string base(dir);
  const auto traces = read_eda_csv(base + "/eda.csv");
  const auto annotations = read_annotations_csv(base + "/annotations.csv");
  std::vector<StimulusFeatures> features;
  bool has_music = false;
  try {
    features = read_stimulus_features_csv(base + "/music.csv");
    has_music = !features.empty();
  } catch (const Error&) {
    has_music = false;
  }
  const cvx::BatemanIrf irf;
  const cvx::CvxedaConfig cvx_cfg;
  const auto examples = pipe::assemble_dataset(
      traces, annotations, has_music ? features : std::vector<StimulusFeatures>{}, irf,
      cvx_cfg, 1200, pipe::RelabelMode::joint2d, 1);
  std::vector<std::string> subjects;
  for (const auto& ex : examples) subjects.push_back(ex.subject_id);
  const auto plan = pipe::make_fold_plan(subjects, 10, 42);
  pipe::TrainSchedule schedule;
  schedule.epochs = 2;  // execution check only; parity is explicitly not asserted
  schedule.seed = 42;
  net::RtcanConfig cfg;  // small-scale profile on real data
  cfg.sca_in_resblock = false;
  cfg.music_dim = 0;
  auto eda_only = examples;
  for (auto& e : eda_only) e.music.reset();
  const auto cv =
      pipe::cross_validate(eda_only, cfg, schedule, plan, pipe::Dim::arousal, 1);
  std::cout << "      real-data EDA-only mean accuracy " << fmt(cv.mean.accuracy)
            << " (no parity asserted)\n";
  return true;
}

struct CriterionSpec {
  int id;
  const char* name;
  std::function<void()> run;
  double budget_s;  // stated runtime bound; 0 = none
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  std::vector<CriterionSpec> criteria{
      {1, "gradient-correctness", criterion_gradients, 30.0},
      {2, "cvxeda-oracle-recovery", criterion_cvxeda_recovery, 120.0},
      {3, "solver-discipline", criterion_solver_discipline, 0.0},
      {4, "attention-structure", criterion_attention, 0.0},
      {5, "end-to-end-synthetic-cv", criterion_end_to_end, 900.0},
      {6, "pipeline-integrity", criterion_pipeline_integrity, 0.0},
      {7, "svm-baseline-and-metrics", criterion_baseline, 0.0},
      {8, "gradcam-saliency", criterion_gradcam, 0.0},
  };

  bool all_pass = true;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string failure;
    try {
      c.run();
    } catch (const Failure& f) {
      failure = f.detail;
    } catch (const std::exception& e) {
      failure = std::string("unexpected error: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (failure.empty() && c.budget_s > 0.0 && secs > c.budget_s) {
      failure =
          "runtime " + fmt(secs) + " s exceeded the " + fmt(c.budget_s) + " s budget";
    }
    if (failure.empty()) {
      std::cout << "[PASS] " << c.id << ". " << c.name << " (" << fmt(secs) << " s)\n";
    } else {
      std::cout << "[FAIL] " << c.id << ". " << c.name << " (" << fmt(secs)
                << " s): " << failure << "\n";
      all_pass = false;
    }
  }

  if (only.empty() || only.count(9)) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string failure;
    bool ran = false;
    try {
      ran = criterion_real_data();
    } catch (const std::exception& e) {
      failure = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!failure.empty()) {
      std::cout << "[FAIL] 9. real-data-profiles (" << fmt(secs) << " s): " << failure
                << " (not gating)\n";
    } else if (ran) {
      std::cout << "[PASS] 9. real-data-profiles (" << fmt(secs) << " s)\n";
    } else {
      std::cout << "[SKIP] 9. real-data-profiles (set RTCAN_REAL_DATA_DIR to run)\n";
    }
  }

  return all_pass ? 0 : 1;
}
