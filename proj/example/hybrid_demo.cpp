// Train a small detector on a synthetic corpus and classify a few frames.
//
//   hybrid_demo [WORK_DIR]

#include <filesystem>
#include <iostream>

#include "sidewalk/sidewalk.hpp"

using namespace sidewalk;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sidewalk_demo";

  dataio::SynthSpec spec;
  spec.train_normal = 300;
  spec.ocsvm_nonhazard = 60;
  spec.test_normal = 4;
  spec.test_nonhazard = 4;
  spec.test_hazard = 4;
  const auto layout = dataio::synth_corpus(spec, work / "corpus");

  const auto cfg = vae::VaeConfig::desk();
  const auto normal = workflow::images_of(
      workflow::load_split(layout.root / "train", evalkit::FrameLabel::normal, cfg.height, cfg.width));
  vae::TrainConfig hyper;
  hyper.epochs = 10;
  auto trained = vae::train_vae(normal, cfg, hyper, 1, [](const vae::EpochLog& e) {
    std::cout << "epoch " << vae::format_epoch_log(e) << '\n';
  });

  pipeline::PipelineConfig pc;
  pc.threshold = workflow::calibrate_threshold(trained.model, normal, 0.995, pc.samples, 0);
  const auto anomalies = workflow::images_of(
      workflow::load_split(layout.root / "ocsvm", evalkit::FrameLabel::anomaly_nonhazard, cfg.height, cfg.width));
  auto classifier = workflow::fit_classifier(trained.model, anomalies, {});

  dataio::ModelBundle bundle;
  bundle.set("vae", dataio::to_section(trained.model));
  workflow::store_classifier(bundle, classifier);
  bundle.set("pipeline", dataio::to_section(pc));
  dataio::save_bundle(bundle, work / "model.bin");

  const pipeline::HybridDetector<float> detector(std::move(trained.model), std::move(classifier), pc);
  std::cout << "threshold " << pc.threshold << '\n';
  const auto alerts = workflow::run_inference(detector, dataio::list_frames(layout.root / "test"), 0);
  std::cout << workflow::format_alerts(alerts);
  std::cout << "bundle written to " << (work / "model.bin").string() << '\n';
}
