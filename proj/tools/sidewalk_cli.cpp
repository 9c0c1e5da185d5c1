// Command-line front end: synthesize a corpus, train and calibrate the VAE,
// fit the latent classifier, run inference and evaluate.

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <new>
#include <optional>
#include <random>
#include <string>

#if __has_include("CLI11.hpp")
#include "CLI11.hpp"
#else
#include <CLI/CLI.hpp>
#endif
#include "sidewalk/sidewalk.hpp"
#include "sidewalk/workflow.hpp"

namespace {

namespace fs = std::filesystem;
using namespace sidewalk;

struct SynthArgs {
  std::string out;
  dataio::SynthSpec spec;
};

struct TrainArgs {
  std::string data, preset = "desk", out;
  vae::TrainConfig hyper;
  std::uint64_t seed = 1;
};

struct CalibrateArgs {
  std::string bundle, data;
  double quantile = 0.995;
  std::size_t samples = 10;
  std::uint64_t seed = 0;
};

struct OcsvmArgs {
  std::string bundle, data, out;
  workflow::ClassifierConfig config;
};

struct InferArgs {
  std::string bundle, frames, alerts, heatmaps;
  std::optional<double> threshold;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string bundle, data, labels, roc, mode = "hybrid";
  std::optional<double> threshold;
  std::uint64_t seed = 0;
};

struct ArchArgs {
  std::string preset = "canonical";
  std::size_t bench = 0;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const auto layout = dataio::synth_corpus(a.spec, a.out);
  std::cout << "wrote " << layout.train_labels().string() << ", " << layout.ocsvm_labels().string() << ", "
            << layout.test_labels().string() << '\n';
  return 0;
}

int run_train(const TrainArgs& a) {
  const auto config = vae::VaeConfig::from_preset(a.preset);
  config.validate();
  const auto frames = workflow::images_of(
      workflow::load_split(a.data, evalkit::FrameLabel::normal, config.height, config.width));
  std::cout << "# epoch\ttotal\trecon\tkl\n";
  auto result = vae::train_vae(frames, config, a.hyper, a.seed, [](const vae::EpochLog& e) {
    std::cout << vae::format_epoch_log(e) << std::endl;
  });
  dataio::ModelBundle bundle;
  bundle.set("vae", dataio::to_section(result.model));
  dataio::save_bundle(bundle, a.out);
  return 0;
}

int run_calibrate(const CalibrateArgs& a) {
  auto bundle = dataio::load_bundle(a.bundle);
  const auto model = dataio::vae_from_section(bundle.section("vae"));
  const auto& cfg = model.config();
  const auto frames =
      workflow::images_of(workflow::load_split(a.data, evalkit::FrameLabel::normal, cfg.height, cfg.width));
  const double threshold = workflow::calibrate_threshold(model, frames, a.quantile, a.samples, a.seed);
  pipeline::PipelineConfig pc;
  if (bundle.has("pipeline")) pc = dataio::pipeline_config_from_section(bundle.section("pipeline"));
  pc.threshold = threshold;
  pc.samples = a.samples;
  pc.validate();
  bundle.set("pipeline", dataio::to_section(pc));
  dataio::save_bundle(bundle, a.bundle);
  std::cout << evalkit::format_number(threshold) << '\n';
  return 0;
}

int run_train_ocsvm(const OcsvmArgs& a) {
  auto bundle = dataio::load_bundle(a.bundle);
  const auto model = dataio::vae_from_section(bundle.section("vae"));
  const auto& cfg = model.config();
  const auto frames = workflow::images_of(
      workflow::load_split(a.data, evalkit::FrameLabel::anomaly_nonhazard, cfg.height, cfg.width));
  const auto classifier = workflow::fit_classifier(model, frames, a.config);
  workflow::store_classifier(bundle, classifier);
  dataio::save_bundle(bundle, a.out.empty() ? a.bundle : a.out);
  std::cout << "frames " << frames.size() << ", pca components " << classifier.pca.output_dim()
            << ", support vectors " << classifier.svm.support_vectors.size() << ", bias "
            << evalkit::format_number(classifier.svm.bias) << '\n';
  if (!classifier.svm.converged) {
    std::cerr << "warning: OCSVM solver stopped after " << classifier.svm.iterations
              << " iterations without meeting the tolerance\n";
  }
  return 0;
}

int run_infer(const InferArgs& a) {
  const auto detector = workflow::load_detector(dataio::load_bundle(a.bundle), a.threshold);
  std::optional<fs::path> heatmaps;
  if (!a.heatmaps.empty()) heatmaps = a.heatmaps;
  const auto alerts = workflow::run_inference(detector, dataio::list_frames(a.frames), a.seed, heatmaps);
  const std::string text = workflow::format_alerts(alerts);
  if (a.alerts.empty() || a.alerts == "-") {
    std::cout << text;
  } else {
    dataio::write_file(a.alerts, text);
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto mode = workflow::parse_eval_mode(a.mode);
  const auto detector = workflow::load_detector(dataio::load_bundle(a.bundle), a.threshold);
  const fs::path labels = a.labels.empty() ? fs::path(a.data) / "labels.csv" : fs::path(a.labels);
  const auto result = workflow::evaluate(detector, a.data, labels, a.seed);

  const auto roc = result.roc(evalkit::linear_thresholds());
  if (!a.roc.empty()) dataio::write_file(a.roc, evalkit::format_roc_csv(roc));
  std::cout << "threshold " << evalkit::format_number(result.threshold) << '\n';
  std::cout << "roc positive class: anomaly (anomaly_nonhazard, hazard) vs normal; VAE score >= T\n";
  std::cout << "auc " << evalkit::format_number(evalkit::auc(roc)) << '\n';
  std::cout << evalkit::format_confusion(result.confusion(mode), "mode " + a.mode);
  return 0;
}

int run_arch(const ArchArgs& a) {
  const auto config = vae::VaeConfig::from_preset(a.preset);
  std::cout << vae::architecture_summary(config);
  if (a.bench == 0) return 0;
  const auto model = vae::VaeModel<float>::build(config, a.seed);
  std::mt19937_64 rng(a.seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> frame(config.input_shape());
  for (float& v : frame.values()) v = u(rng);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < a.bench; ++i) {
    vae::reconstruction_score(model, frame, 1, pipeline::frame_seed(a.seed, i));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "throughput " << evalkit::format_number(static_cast<double>(a.bench) / seconds)
            << " frames/s (encode + 1 decode, " << a.bench << " frames, " << evalkit::format_number(seconds)
            << " s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sidewalk hazard detector: VAE anomaly scoring with a one-class SVM over the latent"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a deterministic synthetic corpus");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--train", synth.spec.train_normal, "normal training frames");
  s->add_option("--test-normal", synth.spec.test_normal, "normal test frames");
  s->add_option("--test-nonhazard", synth.spec.test_nonhazard, "non-hazardous anomaly test frames");
  s->add_option("--test-hazard", synth.spec.test_hazard, "hazard test frames");
  s->add_option("--ocsvm-nonhazard", synth.spec.ocsvm_nonhazard, "non-hazardous anomaly frames for the OCSVM");
  s->add_option("--contamination", synth.spec.contamination, "fraction of training frames carrying a disk");
  s->add_option("--width", synth.spec.width, "frame width");
  s->add_option("--height", synth.spec.height, "frame height");
  s->add_option("--seed", synth.spec.seed, "corpus seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train-vae", "train the VAE on normal frames");
  t->add_option("--data", train.data, "directory with labels.csv (normal rows are used) or *.ppm")->required();
  t->add_option("--preset", train.preset, "desk or canonical");
  t->add_option("--epochs", train.hyper.epochs, "epochs");
  t->add_option("--batch", train.hyper.batch, "mini-batch size");
  t->add_option("--lr", train.hyper.learning_rate, "Adam learning rate");
  t->add_option("--threads", train.hyper.threads, "worker threads per batch (results do not depend on it)");
  t->add_option("--seed", train.seed, "initialization and shuffling seed");
  t->add_option("--out", train.out, "output bundle")->required();

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "print the score quantile of normal frames and store it as threshold");
  c->add_option("--bundle", cal.bundle, "bundle with a trained VAE")->required();
  c->add_option("--data", cal.data, "directory with labels.csv (normal rows are used) or *.ppm")->required();
  c->add_option("--quantile", cal.quantile, "quantile of normal-frame scores");
  c->add_option("--samples", cal.samples, "reparameterized samples per score");
  c->add_option("--seed", cal.seed, "scoring seed");

  OcsvmArgs oc;
  auto* o = app.add_subcommand("train-ocsvm", "fit normalizer, PCA and one-class SVM on non-hazardous anomalies");
  o->add_option("--bundle", oc.bundle, "bundle with a trained VAE")->required();
  o->add_option("--data", oc.data, "directory with labels.csv (anomaly_nonhazard rows are used) or *.ppm")
      ->required();
  o->add_option("--nu", oc.config.nu, "OCSVM nu");
  o->add_option("--gamma", oc.config.gamma, "RBF gamma");
  o->add_option("--pca-var", oc.config.retained_variance, "retained PCA variance fraction");
  o->add_option("--out", oc.out, "output bundle (default: overwrite --bundle)");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "classify every *.ppm in a directory");
  i->add_option("--bundle", inf.bundle, "complete bundle")->required();
  i->add_option("--threshold", inf.threshold, "VAE score threshold (default: calibrated value in the bundle)");
  i->add_option("--frames", inf.frames, "frame directory")->required();
  i->add_option("--alerts", inf.alerts, "alert stream path (default: stdout)");
  i->add_option("--heatmaps", inf.heatmaps, "directory for hazard heatmaps");
  i->add_option("--seed", inf.seed, "scoring seed");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "ROC/AUC and confusion matrix over a labeled split");
  e->add_option("--bundle", ev.bundle, "complete bundle")->required();
  e->add_option("--threshold", ev.threshold, "VAE score threshold (default: calibrated value in the bundle)");
  e->add_option("--data", ev.data, "frame directory")->required();
  e->add_option("--labels", ev.labels, "labels CSV (default: <data>/labels.csv)");
  e->add_option("--roc", ev.roc, "ROC CSV output path");
  e->add_option("--mode", ev.mode, "vae-only or hybrid");
  e->add_option("--seed", ev.seed, "scoring seed");

  ArchArgs arch;
  auto* r = app.add_subcommand("arch", "print the layer table and optionally time forward passes");
  r->add_option("--preset", arch.preset, "desk or canonical");
  r->add_option("--bench", arch.bench, "frames to time (0 = no timing)");
  r->add_option("--seed", arch.seed, "initialization seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s->parsed()) return run_synth(synth);
    if (t->parsed()) return run_train(train);
    if (c->parsed()) return run_calibrate(cal);
    if (o->parsed()) return run_train_ocsvm(oc);
    if (i->parsed()) return run_infer(inf);
    if (e->parsed()) return run_eval(ev);
    if (r->parsed()) return run_arch(arch);
  } catch (const sidewalk::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return err.exit_code();
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 1;
}
