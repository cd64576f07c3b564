#include "rtcan/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rtcan/errors.hpp"
#include "rtcan/ops.hpp"
#include "rtcan/signal.hpp"

namespace rtcan::cam {

using ag::Tape;
using ag::Tensor;

const char* to_string(Layer layer) {
  switch (layer) {
    case Layer::sca_out: return "sca_out";
    case Layer::rnta_out: return "rnta_out";
    case Layer::attention_out: return "attention_out";
  }
  return "?";
}

Layer layer_from_string(const std::string& s) {
  for (auto layer : {Layer::sca_out, Layer::rnta_out, Layer::attention_out}) {
    if (s == to_string(layer)) return layer;
  }
  fail(Err::UnknownLayer, "unknown saliency layer '" + s + "'");
}

SaliencyMap gradcam_1d(net::RtcanModel& model, const LabeledExample& example,
                       Layer layer, int target_class) {
  const auto& cfg = model.config();
  if (target_class < 0 || target_class >= cfg.num_classes) {
    fail(Err::BadLabel, "target class outside the configured range");
  }
  if (static_cast<int>(example.channels.size()) != 3 * cfg.input_len) {
    fail(Err::ShapeMismatch, "example length does not match the model input");
  }

  Tensor x = Tensor::from(example.channels, {1, 3, cfg.input_len});
  std::optional<Tensor> music;
  if (cfg.music_dim > 0) {
    if (!example.music) fail(Err::ShapeMismatch, "example lacks stimulus features");
    music = Tensor::from(*example.music, {1, cfg.music_dim});
  }

  // Eval-mode forward with the tape on, so the captured feature map can be
  // differentiated without touching running statistics.
  Tape tape;
  net::ForwardCapture capture;
  x.set_requires_grad(true);
  model.forward(x, music, /*train=*/false, &tape, &capture);

  Tensor feature;
  switch (layer) {
    case Layer::sca_out: feature = capture.sca_out; break;
    case Layer::rnta_out: feature = capture.rnta_out; break;
    case Layer::attention_out: feature = capture.attention_out; break;
  }
  if (feature.numel() == 0) {
    fail(Err::UnknownLayer, std::string("layer ") + to_string(layer) +
                                " is not produced by attention order '" +
                                net::to_string(cfg.attention_order) + "'");
  }

  Tensor target = ag::slice(capture.logits, 1, target_class, 1, &tape);
  Tensor loss = ag::sum(target, &tape);
  tape.backward(loss);

  const int C = feature.size(1), T = feature.size(2);
  const auto& grad = feature.impl()->grad;
  SaliencyMap map;
  map.target_class = target_class;
  map.layer = layer;
  std::vector<double> raw(static_cast<std::size_t>(T), 0.0);
  if (!grad.empty()) {
    for (int c = 0; c < C; ++c) {
      double alpha = 0.0;  // time-averaged gradient per channel
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(c) * T;
      for (int t = 0; t < T; ++t) alpha += grad[static_cast<std::size_t>(base + t)];
      alpha /= T;
      const double* feat = feature.data() + base;
      for (int t = 0; t < T; ++t) raw[static_cast<std::size_t>(t)] += alpha * feat[t];
    }
  }
  for (double& v : raw) v = std::max(0.0, v);

  map.weights = resample_linear(raw, cfg.input_len);
  double peak = 0.0;
  for (double v : map.weights) peak = std::max(peak, v);
  if (peak > 0.0) {
    for (double& v : map.weights) v /= peak;
  } else {
    std::fill(map.weights.begin(), map.weights.end(), 0.0);
  }
  return map;
}

namespace {

std::string polyline(const std::vector<double>& ys, int x0, int y0, int w, int h,
                     double lo, double hi, const char* color) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double px = x0 + static_cast<double>(i) / (ys.size() - 1) * w;
    const double py = y0 + h - (ys[i] - lo) / span * h;
    s << px << ',' << py << ' ';
  }
  s << "\"/>\n";
  return s.str();
}

}  // namespace

void emit_plot(const LabeledExample& example, const std::vector<SaliencyMap>& maps,
               const std::string& out_path_base) {
  if (maps.empty()) fail(Err::BadParams, "emit_plot: no maps given");
  const int L = example.length;
  for (const auto& m : maps) {
    if (static_cast<int>(m.weights.size()) != L) {
      fail(Err::ShapeMismatch, "saliency length does not match the example");
    }
  }

  {
    std::ofstream csv(out_path_base + ".csv", std::ios::binary);
    if (!csv) fail(Err::IoError, "cannot write " + out_path_base + ".csv");
    csv.precision(17);
    csv << "t,origin,phasic,tonic";
    for (const auto& m : maps) csv << ",weight_" << to_string(m.layer);
    csv << '\n';
    for (int t = 0; t < L; ++t) {
      csv << t;
      for (int ch = 0; ch < 3; ++ch) {
        csv << ',' << example.channels[static_cast<std::size_t>(ch * L + t)];
      }
      for (const auto& m : maps) csv << ',' << m.weights[static_cast<std::size_t>(t)];
      csv << '\n';
    }
  }

  const int panel_w = 640, panel_h = 160, margin = 20;
  const int width = panel_w + 2 * margin;
  const int height = static_cast<int>(maps.size()) * (panel_h + margin) + margin;
  std::ofstream svg(out_path_base + ".svg", std::ios::binary);
  if (!svg) fail(Err::IoError, "cannot write " + out_path_base + ".svg");
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' ' << height
      << "\">\n";

  double lo = example.channels[0], hi = example.channels[0];
  for (double v : example.channels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  for (std::size_t p = 0; p < maps.size(); ++p) {
    const int y0 = margin + static_cast<int>(p) * (panel_h + margin);
    svg << "<g>\n<text x=\"" << margin << "\" y=\"" << y0 - 5
        << "\" font-size=\"10\" font-family=\"sans-serif\">" << to_string(maps[p].layer)
        << " (class " << maps[p].target_class << ")</text>\n";
    // saliency column strip behind the curves; zero weights draw nothing
    const double bar_w = static_cast<double>(panel_w) / L;
    for (int t = 0; t < L; ++t) {
      const double wgt = maps[p].weights[static_cast<std::size_t>(t)];
      if (wgt <= 0.0) continue;
      svg << "<rect x=\"" << margin + t * bar_w << "\" y=\"" << y0 << "\" width=\""
          << bar_w << "\" height=\"" << panel_h << "\" fill=\"black\" opacity=\""
          << 0.65 * wgt << "\"/>\n";
    }
    const char* colors[3] = {"#d62728", "#1f77b4", "#2ca02c"};
    for (int ch = 0; ch < 3; ++ch) {
      std::vector<double> row(example.channels.begin() + ch * L,
                              example.channels.begin() + (ch + 1) * L);
      svg << polyline(row, margin, y0, panel_w, panel_h, lo, hi, colors[ch]);
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
}

}  // namespace rtcan::cam
