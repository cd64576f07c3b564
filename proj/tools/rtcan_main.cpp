// Command-line front end: decompose, synth, train, eval, baseline, explain,
// correlate. Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 solver non-convergence. Every failure prints one machine-parsable line
// `error: <Kind>: <reason>` to stderr.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtcan/checkpoint.hpp"
#include "rtcan/csv.hpp"
#include "rtcan/cvxeda.hpp"
#include "rtcan/errors.hpp"
#include "rtcan/gradcam.hpp"
#include "rtcan/model.hpp"
#include "rtcan/pipeline.hpp"
#include "rtcan/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rtcan;

namespace {

int exit_code_for(Err kind) {
  switch (kind) {
    case Err::Usage:
    case Err::BadConfig:
      return 1;
    case Err::NoConvergence:
      return 3;
    default:
      return 2;
  }
}

std::uint64_t seed_fallback() {
  if (const char* env = std::getenv("RTCAN_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 42;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::IoError, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(Err::Usage, path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::IoError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

json schedule_to_json(const pipe::TrainSchedule& s) {
  return json{{"lr0", s.lr0},         {"decay", s.decay},
              {"decay_every", s.decay_every}, {"batch_size", s.batch_size},
              {"epochs", s.epochs},   {"seed", s.seed}};
}

json metrics_to_json(const pipe::MetricsReport& m) {
  return json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"confusion", {{m.confusion[0][0], m.confusion[0][1]},
                             {m.confusion[1][0], m.confusion[1][1]}}}};
}

json mean_to_json(const pipe::MeanMetrics& m) {
  return json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1}};
}

json fold_plan_to_json(const pipe::FoldPlan& plan) {
  json folds = json::array();
  for (const auto& f : plan.folds) folds.push_back(f);
  return folds;
}

struct SynthOptions {
  int n_subjects = 20;
  int traces_per_subject = 20;
  int music_dim = 8;
  std::uint64_t seed = 0;
  synth::SynthSpec low = synth::default_low_spec();
  synth::SynthSpec high = synth::default_high_spec();
};

void spec_from_json(const json& j, synth::SynthSpec& s) {
  static const char* keys[] = {"sampling_hz",     "duration_s",   "scr_rate_hz",
                               "scr_amp_lo",      "scr_amp_hi",   "tonic_level",
                               "tonic_drift_per_s", "noise_std"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) fail(Err::Usage, "unknown synth spec key '" + key + "'");
  }
  if (j.contains("sampling_hz")) j.at("sampling_hz").get_to(s.sampling_hz);
  if (j.contains("duration_s")) j.at("duration_s").get_to(s.duration_s);
  if (j.contains("scr_rate_hz")) j.at("scr_rate_hz").get_to(s.scr_rate_hz);
  if (j.contains("scr_amp_lo")) j.at("scr_amp_lo").get_to(s.scr_amp_lo);
  if (j.contains("scr_amp_hi")) j.at("scr_amp_hi").get_to(s.scr_amp_hi);
  if (j.contains("tonic_level")) j.at("tonic_level").get_to(s.tonic_level);
  if (j.contains("tonic_drift_per_s")) j.at("tonic_drift_per_s").get_to(s.tonic_drift_per_s);
  if (j.contains("noise_std")) j.at("noise_std").get_to(s.noise_std);
}

json spec_to_json(const synth::SynthSpec& s) {
  return json{{"sampling_hz", s.sampling_hz},
              {"duration_s", s.duration_s},
              {"scr_rate_hz", s.scr_rate_hz},
              {"scr_amp_lo", s.scr_amp_lo},
              {"scr_amp_hi", s.scr_amp_hi},
              {"tonic_level", s.tonic_level},
              {"tonic_drift_per_s", s.tonic_drift_per_s},
              {"noise_std", s.noise_std}};
}

int run_synth(const std::string& spec_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_flag) {
  SynthOptions opt;
  opt.seed = seed_fallback();
  json spec_doc = json::object();
  if (!spec_path.empty()) {
    spec_doc = load_json_file(spec_path);
    for (const auto& [key, value] : spec_doc.items()) {
      (void)value;
      if (key != "n_subjects" && key != "traces_per_subject" && key != "music_dim" &&
          key != "seed" && key != "low" && key != "high") {
        fail(Err::Usage, "unknown synth key '" + key + "'");
      }
    }
    if (spec_doc.contains("n_subjects")) spec_doc.at("n_subjects").get_to(opt.n_subjects);
    if (spec_doc.contains("traces_per_subject")) {
      spec_doc.at("traces_per_subject").get_to(opt.traces_per_subject);
    }
    if (spec_doc.contains("music_dim")) spec_doc.at("music_dim").get_to(opt.music_dim);
    if (spec_doc.contains("seed")) spec_doc.at("seed").get_to(opt.seed);
    if (spec_doc.contains("low")) spec_from_json(spec_doc.at("low"), opt.low);
    if (spec_doc.contains("high")) spec_from_json(spec_doc.at("high"), opt.high);
  }
  if (seed_flag) opt.seed = *seed_flag;

  const auto started = std::chrono::steady_clock::now();
  auto ds = synth::gen_dataset(opt.n_subjects, opt.traces_per_subject, opt.low,
                               opt.high, opt.music_dim, opt.seed);
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/truth");
  write_eda_csv(out_dir + "/eda.csv", ds.traces);
  write_annotations_csv(out_dir + "/annotations.csv", ds.annotations);
  if (!ds.features.empty()) {
    write_stimulus_features_csv(out_dir + "/music.csv", ds.features);
  }
  for (std::size_t i = 0; i < ds.traces.size(); ++i) {
    const auto& trace = ds.traces[i];
    const auto& truth = ds.truths[i];
    const std::string base =
        out_dir + "/truth/" + trace.subject_id + "_" + trace.stimulus_id;
    std::ofstream truth_csv(base + ".csv", std::ios::binary);
    truth_csv.precision(17);
    truth_csv << "t_s,true_phasic,true_tonic\n";
    for (std::size_t k = 0; k < truth.true_phasic.size(); ++k) {
      truth_csv << k / trace.sampling_hz << ',' << truth.true_phasic[k] << ','
                << truth.true_tonic[k] << '\n';
    }
    std::ofstream spikes(base + ".spikes.csv", std::ios::binary);
    spikes.precision(17);
    spikes << "spike_time_s\n";
    for (double t : truth.spike_times_s) spikes << t << '\n';
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest{{"command", "synth"},
                {"seed", opt.seed},
                {"n_subjects", opt.n_subjects},
                {"traces_per_subject", opt.traces_per_subject},
                {"music_dim", opt.music_dim},
                {"low", spec_to_json(opt.low)},
                {"high", spec_to_json(opt.high)},
                {"outputs",
                 {{"eda.csv", file_digest(out_dir + "/eda.csv")},
                  {"annotations.csv", file_digest(out_dir + "/annotations.csv")}}},
                {"wall_clock_s", wall}};
  write_json_file(out_dir + "/manifest.json", manifest);
  std::cout << "wrote " << ds.traces.size() << " traces to " << out_dir << '\n';
  return 0;
}

struct DecomposeOptions {
  std::string in_path, out_dir;
  cvx::BatemanIrf irf;
  cvx::CvxedaConfig cfg;
};

int run_decompose(const DecomposeOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  const auto traces = read_eda_csv(opt.in_path);
  if (traces.empty()) fail(Err::EmptySet, "no traces in " + opt.in_path);
  fs::create_directories(opt.out_dir);
  for (const auto& trace : traces) {
    const auto dec = cvx::decompose(trace, opt.irf, opt.cfg);
    write_decomposition_csv(
        opt.out_dir + "/" + trace.subject_id + "_" + trace.stimulus_id + ".csv",
        trace.sampling_hz, dec);
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest{{"command", "decompose"},
                {"alpha", opt.cfg.alpha},
                {"gamma", opt.cfg.gamma},
                {"knot_spacing_s", opt.cfg.knot_spacing_s},
                {"solver_tol", opt.cfg.solver_tol},
                {"max_iter", opt.cfg.max_iter},
                {"penalize_driver", opt.cfg.penalize_driver},
                {"tau0", opt.irf.tau0},
                {"tau1", opt.irf.tau1},
                {"irf_duration", opt.irf.duration},
                {"inputs", {{opt.in_path, file_digest(opt.in_path)}}},
                {"wall_clock_s", wall}};
  write_json_file(opt.out_dir + "/manifest.json", manifest);
  std::cout << "decomposed " << traces.size() << " traces into " << opt.out_dir << '\n';
  return 0;
}

struct DataArgs {
  std::string eda_path, annotations_path, music_path;
  std::string relabel_mode = "joint2d";
  int jobs = 1;
};

std::vector<LabeledExample> load_dataset(const DataArgs& data, const cvx::BatemanIrf& irf,
                                         const cvx::CvxedaConfig& cvx_cfg,
                                         int input_len, bool want_music) {
  const auto traces = read_eda_csv(data.eda_path);
  const auto annotations = read_annotations_csv(data.annotations_path);
  std::vector<StimulusFeatures> features;
  if (want_music) {
    if (data.music_path.empty()) {
      fail(Err::Usage, "this configuration needs --music features");
    }
    features = read_stimulus_features_csv(data.music_path);
  }
  const auto mode = data.relabel_mode == "per_dimension"
                        ? pipe::RelabelMode::per_dimension
                        : pipe::RelabelMode::joint2d;
  if (data.relabel_mode != "per_dimension" && data.relabel_mode != "joint2d") {
    fail(Err::Usage, "relabel mode must be joint2d or per_dimension");
  }
  return pipe::assemble_dataset(traces, annotations, features, irf, cvx_cfg,
                                input_len, mode, data.jobs);
}

std::vector<pipe::Dim> dims_from_flag(const std::string& dim_flag) {
  if (dim_flag == "both") return {pipe::Dim::valence, pipe::Dim::arousal};
  if (dim_flag == "valence") return {pipe::Dim::valence};
  if (dim_flag == "arousal") return {pipe::Dim::arousal};
  fail(Err::Usage, "dim must be valence, arousal or both");
}

struct TrainOptions {
  DataArgs data;
  std::string out_dir;
  std::string config_path;
  std::string profile;
  std::string dim_flag = "both";
  std::string attention_order;
  int folds = 10;
  int input_len = 0;  // 0 = from config
  pipe::TrainSchedule schedule;
  bool save_checkpoints = true;
};

int run_train(TrainOptions& opt) {
  const auto started = std::chrono::steady_clock::now();

  net::RtcanConfig config;
  if (!opt.profile.empty()) {
    if (opt.profile == "large-scale") {
      config.sca_in_resblock = true;  // music_dim set from the feature file below
    } else if (opt.profile == "small-scale") {
      config.sca_in_resblock = false;
      config.music_dim = 0;
    } else {
      fail(Err::Usage, "profile must be large-scale or small-scale");
    }
  }
  if (!opt.config_path.empty()) {
    json file_cfg = load_json_file(opt.config_path);
    json merged = net::config_to_json(config);
    for (auto& [k, v] : file_cfg.items()) merged[k] = v;
    config = net::config_from_json(merged);
  }
  if (opt.input_len > 0) config.input_len = opt.input_len;
  if (!opt.attention_order.empty()) {
    config.attention_order = net::attention_order_from_string(opt.attention_order);
  }

  const bool want_music =
      opt.profile == "large-scale" || config.music_dim > 0 || !opt.data.music_path.empty();
  if (opt.profile == "small-scale") {
    config.music_dim = 0;
  } else if (want_music) {
    if (opt.data.music_path.empty()) {
      fail(Err::Usage, "this configuration needs --music features");
    }
    const auto features = read_stimulus_features_csv(opt.data.music_path);
    if (features.empty()) fail(Err::EmptySet, "no stimulus features found");
    config.music_dim = static_cast<int>(features[0].vector.size());
  }
  config.validate();

  const cvx::BatemanIrf irf;
  const cvx::CvxedaConfig cvx_cfg;
  auto dataset = load_dataset(opt.data, irf, cvx_cfg, config.input_len,
                              config.music_dim > 0);
  std::vector<std::string> subjects;
  for (const auto& ex : dataset) subjects.push_back(ex.subject_id);
  const auto plan = pipe::make_fold_plan(subjects, opt.folds, opt.schedule.seed);

  fs::create_directories(opt.out_dir);
  json per_dim = json::object();
  for (pipe::Dim dim : dims_from_flag(opt.dim_flag)) {
    auto cv = pipe::cross_validate(dataset, config, opt.schedule, plan, dim,
                                   opt.data.jobs);
    json folds_json = json::array();
    for (const auto& m : cv.per_fold) folds_json.push_back(metrics_to_json(m));
    per_dim[pipe::to_string(dim)] = json{{"per_fold", folds_json},
                                         {"mean", mean_to_json(cv.mean)}};
    if (opt.save_checkpoints) {
      // Retrain fold 0's replica to keep one representative checkpoint per
      // dim without holding ten models in memory.
      net::RtcanModel model(config, mix_seed(opt.schedule.seed, 0x39D7));
      std::vector<LabeledExample> train_set;
      const std::set<std::string> held(plan.folds[0].begin(), plan.folds[0].end());
      for (const auto& ex : dataset) {
        if (!held.count(ex.subject_id)) train_set.push_back(ex);
      }
      pipe::train(model, train_set, opt.schedule, 0, dim);
      net::save_checkpoint(
          opt.out_dir + "/fold0_" + pipe::to_string(dim) + ".ckpt", model);
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json inputs{{opt.data.eda_path, file_digest(opt.data.eda_path)},
              {opt.data.annotations_path, file_digest(opt.data.annotations_path)}};
  if (!opt.data.music_path.empty()) {
    inputs[opt.data.music_path] = file_digest(opt.data.music_path);
  }
  json manifest{{"command", "train"},
                {"config", net::config_to_json(config)},
                {"schedule", schedule_to_json(opt.schedule)},
                {"seed", opt.schedule.seed},
                {"relabel_mode", opt.data.relabel_mode},
                {"fold_plan", fold_plan_to_json(plan)},
                {"results", per_dim},
                {"inputs", inputs},
                {"wall_clock_s", wall}};
  write_json_file(opt.out_dir + "/manifest.json", manifest);
  std::cout << per_dim.dump(2) << '\n';
  return 0;
}

int run_eval(const std::string& checkpoint, DataArgs& data, const std::string& dim_flag) {
  net::RtcanModel model = net::load_checkpoint(checkpoint);
  const cvx::BatemanIrf irf;
  const cvx::CvxedaConfig cvx_cfg;
  auto dataset = load_dataset(data, irf, cvx_cfg, model.config().input_len,
                              model.config().music_dim > 0);
  json out = json::object();
  for (pipe::Dim dim : dims_from_flag(dim_flag)) {
    out[pipe::to_string(dim)] = metrics_to_json(pipe::evaluate(model, dataset, dim));
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct BaselineOptions {
  DataArgs data;
  double C = 0.25;
  int folds = 10;
  int input_len = 1200;
  std::uint64_t seed = 0;
  std::string dim_flag = "both";
  std::string out_dir;
};

int run_baseline(BaselineOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  const cvx::BatemanIrf irf;
  const cvx::CvxedaConfig cvx_cfg;
  auto dataset = load_dataset(opt.data, irf, cvx_cfg, opt.input_len, false);
  std::vector<std::string> subjects;
  for (const auto& ex : dataset) subjects.push_back(ex.subject_id);
  const auto plan = pipe::make_fold_plan(subjects, opt.folds, opt.seed);

  json per_dim = json::object();
  for (pipe::Dim dim : dims_from_flag(opt.dim_flag)) {
    json folds_json = json::array();
    pipe::MeanMetrics mean;
    for (std::size_t fold = 0; fold < plan.folds.size(); ++fold) {
      const std::set<std::string> held(plan.folds[fold].begin(), plan.folds[fold].end());
      std::vector<LabeledExample> train_set, test_set;
      for (const auto& ex : dataset) {
        (held.count(ex.subject_id) ? test_set : train_set).push_back(ex);
      }
      const auto report = pipe::svm_baseline(train_set, test_set, dim, opt.C);
      folds_json.push_back(metrics_to_json(report));
      mean.accuracy += report.accuracy / plan.folds.size();
      mean.precision += report.precision / plan.folds.size();
      mean.recall += report.recall / plan.folds.size();
      mean.f1 += report.f1 / plan.folds.size();
    }
    per_dim[pipe::to_string(dim)] = json{{"per_fold", folds_json},
                                         {"mean", mean_to_json(mean)}};
  }
  std::cout << per_dim.dump(2) << '\n';
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest{{"command", "baseline"},
                  {"C", opt.C},
                  {"input_len", opt.input_len},
                  {"seed", opt.seed},
                  {"fold_plan", fold_plan_to_json(plan)},
                  {"results", per_dim},
                  {"inputs",
                   {{opt.data.eda_path, file_digest(opt.data.eda_path)},
                    {opt.data.annotations_path, file_digest(opt.data.annotations_path)}}},
                  {"wall_clock_s", wall}};
    write_json_file(opt.out_dir + "/manifest.json", manifest);
  }
  return 0;
}

struct ExplainOptions {
  std::string checkpoint;
  DataArgs data;
  std::string subject, stimulus;
  std::string dim_flag = "arousal";
  std::string layer_flag = "all";
  std::string out_dir = ".";
};

int run_explain(ExplainOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  net::RtcanModel model = net::load_checkpoint(opt.checkpoint);
  const cvx::BatemanIrf irf;
  const cvx::CvxedaConfig cvx_cfg;
  auto dataset = load_dataset(opt.data, irf, cvx_cfg, model.config().input_len,
                              model.config().music_dim > 0);
  const LabeledExample* example = nullptr;
  for (const auto& ex : dataset) {
    if (ex.subject_id == opt.subject && ex.stimulus_id == opt.stimulus) {
      example = &ex;
      break;
    }
  }
  if (!example) {
    fail(Err::EmptySet, "no trace for subject " + opt.subject + " stimulus " + opt.stimulus);
  }
  if (opt.dim_flag != "valence" && opt.dim_flag != "arousal") {
    fail(Err::Usage, "explain needs --dim valence or arousal");
  }

  // Explain the predicted class for the requested dimension.
  ag::Tensor x = ag::Tensor::from(example->channels, {1, 3, model.config().input_len});
  std::optional<ag::Tensor> music;
  if (model.config().music_dim > 0) {
    music = ag::Tensor::from(*example->music, {1, model.config().music_dim});
  }
  ag::Tensor probs = model.forward(x, music, false, nullptr);
  const int target = probs.data()[1] > probs.data()[0] ? 1 : 0;

  std::vector<cam::Layer> layers;
  if (opt.layer_flag == "all") {
    layers = {cam::Layer::sca_out, cam::Layer::rnta_out, cam::Layer::attention_out};
  } else {
    layers = {cam::layer_from_string(opt.layer_flag)};
  }
  fs::create_directories(opt.out_dir);
  json emitted = json::array();
  for (cam::Layer layer : layers) {
    const auto map = cam::gradcam_1d(model, *example, layer, target);
    const std::string base = opt.out_dir + "/" + opt.subject + "_" + opt.stimulus +
                             "_" + opt.dim_flag + "_" + cam::to_string(layer);
    cam::emit_plot(*example, {map}, base);
    emitted.push_back(base + ".csv");
    emitted.push_back(base + ".svg");
    std::cout << "wrote " << base << ".csv and .svg\n";
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json inputs{{opt.checkpoint, file_digest(opt.checkpoint)},
              {opt.data.eda_path, file_digest(opt.data.eda_path)},
              {opt.data.annotations_path, file_digest(opt.data.annotations_path)}};
  if (!opt.data.music_path.empty()) {
    inputs[opt.data.music_path] = file_digest(opt.data.music_path);
  }
  json manifest{{"command", "explain"},
                {"subject", opt.subject},
                {"stimulus", opt.stimulus},
                {"dim", opt.dim_flag},
                {"layer", opt.layer_flag},
                {"target_class", target},
                {"config", net::config_to_json(model.config())},
                {"outputs", emitted},
                {"inputs", inputs},
                {"wall_clock_s", wall}};
  write_json_file(opt.out_dir + "/manifest.json", manifest);
  return 0;
}

int run_correlate(const std::string& annotations_path) {
  const auto annotations = read_annotations_csv(annotations_path);
  std::vector<double> valence, arousal;
  for (const auto& a : annotations) {
    valence.push_back(a.valence);
    arousal.push_back(a.arousal);
  }
  const auto result = pipe::pearson_r(valence, arousal);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);
  std::cout << "r=" << result.r << " t_stat=" << result.t_stat
            << " n=" << valence.size() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RTCAN-1D: EDA decomposition, attention-network training and explanation"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic EDA corpus");
  std::string synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth_cmd->add_option("--spec", synth_spec, "JSON spec file");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "seed override");

  // --- decompose ---
  auto* dec_cmd = app.add_subcommand("decompose", "split traces into phasic/tonic/driver");
  DecomposeOptions dec;
  dec_cmd->add_option("--in", dec.in_path, "EDA CSV")->required();
  dec_cmd->add_option("--out", dec.out_dir, "output directory")->required();
  dec_cmd->add_option("--alpha", dec.cfg.alpha, "l1 weight");
  dec_cmd->add_option("--gamma", dec.cfg.gamma, "spline ridge weight");
  dec_cmd->add_option("--tau0", dec.irf.tau0, "fast IRF time constant (s)");
  dec_cmd->add_option("--tau1", dec.irf.tau1, "slow IRF time constant (s)");
  dec_cmd->add_option("--irf-duration", dec.irf.duration, "IRF truncation (s)");
  dec_cmd->add_option("--knot-spacing", dec.cfg.knot_spacing_s, "tonic knot spacing (s)");
  dec_cmd->add_option("--tol", dec.cfg.solver_tol, "solver tolerance");
  dec_cmd->add_option("--max-iter", dec.cfg.max_iter, "iteration cap");
  dec_cmd->add_flag("--penalize-driver", dec.cfg.penalize_driver,
                    "penalize the driver instead of the phasic signal");

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "subject-independent 10-fold CV training");
  TrainOptions tr;
  tr.schedule.seed = seed_fallback();
  train_cmd->add_option("--eda", tr.data.eda_path, "EDA CSV")->required();
  train_cmd->add_option("--annotations", tr.data.annotations_path, "annotation CSV")->required();
  train_cmd->add_option("--music", tr.data.music_path, "stimulus feature CSV");
  train_cmd->add_option("--config", tr.config_path, "RtcanConfig JSON (flags override)");
  train_cmd->add_option("--profile", tr.profile, "large-scale | small-scale");
  train_cmd->add_option("--out", tr.out_dir, "run directory")->required();
  train_cmd->add_option("--dim", tr.dim_flag, "valence | arousal | both");
  train_cmd->add_option("--attention-order", tr.attention_order,
                        "sca_then_rnta | rnta_then_sca | parallel | sca_only | rnta_only | none");
  train_cmd->add_option("--input-len", tr.input_len, "network input length");
  train_cmd->add_option("--folds", tr.folds, "fold count");
  train_cmd->add_option("--jobs", tr.data.jobs, "parallel workers");
  train_cmd->add_option("--epochs", tr.schedule.epochs, "training epochs");
  train_cmd->add_option("--batch-size", tr.schedule.batch_size, "mini-batch size");
  train_cmd->add_option("--lr0", tr.schedule.lr0, "initial learning rate");
  train_cmd->add_option("--decay", tr.schedule.decay, "lr decay factor");
  train_cmd->add_option("--decay-every", tr.schedule.decay_every, "epochs per decay");
  train_cmd->add_option("--seed", tr.schedule.seed, "run seed");
  train_cmd->add_option("--relabel", tr.data.relabel_mode, "joint2d | per_dimension");
  train_cmd->add_flag("!--no-checkpoints", tr.save_checkpoints, "skip checkpoint files");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_dim = "both";
  DataArgs eval_data;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--eda", eval_data.eda_path, "EDA CSV")->required();
  eval_cmd->add_option("--annotations", eval_data.annotations_path, "annotation CSV")->required();
  eval_cmd->add_option("--music", eval_data.music_path, "stimulus feature CSV");
  eval_cmd->add_option("--dim", eval_dim, "valence | arousal | both");
  eval_cmd->add_option("--relabel", eval_data.relabel_mode, "joint2d | per_dimension");

  // --- baseline ---
  auto* base_cmd = app.add_subcommand("baseline", "linear-SVM baseline over the fold plan");
  BaselineOptions bl;
  bl.seed = seed_fallback();
  base_cmd->add_option("--eda", bl.data.eda_path, "EDA CSV")->required();
  base_cmd->add_option("--annotations", bl.data.annotations_path, "annotation CSV")->required();
  base_cmd->add_option("--C", bl.C, "SVM regularization parameter");
  base_cmd->add_option("--folds", bl.folds, "fold count");
  base_cmd->add_option("--input-len", bl.input_len, "resampled feature length");
  base_cmd->add_option("--seed", bl.seed, "fold plan seed");
  base_cmd->add_option("--dim", bl.dim_flag, "valence | arousal | both");
  base_cmd->add_option("--out", bl.out_dir, "optional manifest directory");
  base_cmd->add_option("--relabel", bl.data.relabel_mode, "joint2d | per_dimension");

  // --- explain ---
  auto* exp_cmd = app.add_subcommand("explain", "Grad-CAM saliency for one trace");
  ExplainOptions ex;
  exp_cmd->add_option("--checkpoint", ex.checkpoint, "model checkpoint")->required();
  exp_cmd->add_option("--eda", ex.data.eda_path, "EDA CSV")->required();
  exp_cmd->add_option("--annotations", ex.data.annotations_path, "annotation CSV")->required();
  exp_cmd->add_option("--music", ex.data.music_path, "stimulus feature CSV");
  exp_cmd->add_option("--subject", ex.subject, "subject id")->required();
  exp_cmd->add_option("--stimulus", ex.stimulus, "stimulus id")->required();
  exp_cmd->add_option("--dim", ex.dim_flag, "valence | arousal");
  exp_cmd->add_option("--layer", ex.layer_flag, "sca_out | rnta_out | attention_out | all");
  exp_cmd->add_option("--out", ex.out_dir, "output directory");

  // --- correlate ---
  auto* corr_cmd = app.add_subcommand("correlate", "Pearson r between valence and arousal");
  std::string corr_annotations;
  corr_cmd->add_option("--annotations", corr_annotations, "annotation CSV")->required();

  try {
    app.parse(argc, argv);
    if (synth_cmd->parsed()) return run_synth(synth_spec, synth_out, synth_seed);
    if (dec_cmd->parsed()) return run_decompose(dec);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(eval_ckpt, eval_data, eval_dim);
    if (base_cmd->parsed()) return run_baseline(bl);
    if (exp_cmd->parsed()) return run_explain(ex);
    if (corr_cmd->parsed()) return run_correlate(corr_annotations);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: Usage: " << e.what() << '\n';
    std::cerr << app.help();
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 2;
  }
}
