#pragma once

// Dataset-level steps shared by the command-line tool and the acceptance
// harness: train, calibrate, fit the latent classifier, run and evaluate the
// detector over a directory of frames.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sidewalk/bundle.hpp"
#include "sidewalk/errors.hpp"
#include "sidewalk/evalkit.hpp"
#include "sidewalk/image_io.hpp"
#include "sidewalk/latentprep.hpp"
#include "sidewalk/ocsvm.hpp"
#include "sidewalk/pipeline.hpp"
#include "sidewalk/vae.hpp"

namespace sidewalk::workflow {

namespace fs = std::filesystem;
using dataio::Image;
using evalkit::FrameLabel;

// Frames of one label from `dir`. With a labels.csv present only rows with
// `label` are used; otherwise every *.ppm in the directory is.
inline std::vector<dataio::FrameRecord> load_split(const fs::path& dir, FrameLabel label, std::size_t height,
                                                   std::size_t width) {
  const fs::path csv = dir / "labels.csv";
  std::vector<dataio::FrameRecord> out;
  if (fs::exists(csv)) {
    out = dataio::load_labeled_frames(csv, height, width, label);
  } else {
    for (const auto& path : dataio::list_frames(dir)) out.push_back({path, dataio::load_frame(path, height, width), {}});
  }
  if (out.empty()) {
    throw DataError("no " + std::string(evalkit::to_string(label)) + " frames found in '" + dir.string() + "'");
  }
  return out;
}

inline std::vector<Image> images_of(std::vector<dataio::FrameRecord> records) {
  std::vector<Image> out;
  out.reserve(records.size());
  for (auto& r : records) out.push_back(std::move(r.image));
  return out;
}

// Linear-interpolated sample quantile of the frames' scores.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// Reconstruction scores, frame i drawing its noise from frame_seed(seed, i).
inline std::vector<double> score_frames(const vae::VaeModel<float>& model, const std::vector<Image>& frames,
                                        std::size_t samples, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.push_back(vae::reconstruction_score(model, frames[i], samples, pipeline::frame_seed(seed, i)));
  }
  return out;
}

inline double calibrate_threshold(const vae::VaeModel<float>& model, const std::vector<Image>& normal_frames,
                                  double q, std::size_t samples, std::uint64_t seed) {
  return quantile(score_frames(model, normal_frames, samples, seed), q);
}

struct ClassifierConfig {
  double nu = 0.5;
  double gamma = 0.5;
  double retained_variance = 0.95;
};

// Normalizer, PCA and one-class SVM fitted on the encoder means of
// non-hazardous anomaly frames.
inline pipeline::LatentClassifier fit_classifier(const vae::VaeModel<float>& model, const std::vector<Image>& frames,
                                                 const ClassifierConfig& config) {
  std::vector<latentprep::Vector> latents;
  latents.reserve(frames.size());
  for (const auto& f : frames) {
    const auto enc = model.encode(f);
    latents.emplace_back(enc.mu.begin(), enc.mu.end());
  }
  pipeline::LatentClassifier c;
  c.normalizer = latentprep::normalizer_fit(latents);
  for (auto& v : latents) v = latentprep::normalizer_apply(c.normalizer, v);
  c.pca = latentprep::pca_fit(latents, config.retained_variance);
  for (auto& v : latents) v = latentprep::pca_apply(c.pca, v);
  ocsvm::OcsvmTrainConfig svm_config;
  svm_config.nu = config.nu;
  svm_config.gamma = config.gamma;
  c.svm = ocsvm::fit(latents, svm_config);
  return c;
}

inline void store_classifier(dataio::ModelBundle& bundle, const pipeline::LatentClassifier& c) {
  bundle.set("normalizer", dataio::to_section(c.normalizer));
  bundle.set("pca", dataio::to_section(c.pca));
  bundle.set("ocsvm", dataio::to_section(c.svm));
}

// Threshold from the flag, else from the bundle's pipeline section.
inline pipeline::PipelineConfig pipeline_config(const dataio::ModelBundle& bundle, std::optional<double> threshold) {
  pipeline::PipelineConfig config;
  if (bundle.has("pipeline")) config = dataio::pipeline_config_from_section(bundle.section("pipeline"));
  if (threshold) {
    config.threshold = *threshold;
  } else if (!bundle.has("pipeline")) {
    throw ArgumentError("no threshold given and the bundle stores none (run calibrate or pass --threshold)");
  }
  config.validate();
  return config;
}

inline pipeline::HybridDetector<float> load_detector(const dataio::ModelBundle& bundle,
                                                     std::optional<double> threshold) {
  return {dataio::vae_from_section(bundle.section("vae")), dataio::classifier_from_bundle(bundle),
          pipeline_config(bundle, threshold)};
}

// One alert per frame in name order; heatmaps of hazard frames go to
// `heatmap_dir` as <stem>.pgm when given.
inline std::vector<pipeline::AlertRecord> run_inference(const pipeline::HybridDetector<float>& detector,
                                                        const std::vector<fs::path>& frames, std::uint64_t seed,
                                                        const std::optional<fs::path>& heatmap_dir = std::nullopt) {
  const auto& cfg = detector.model().config();
  std::vector<pipeline::AlertRecord> alerts;
  alerts.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Image frame = dataio::load_frame(frames[i], cfg.height, cfg.width);
    auto verdict = detector.classify(frame, seed, i);
    if (heatmap_dir && verdict.heatmap) {
      dataio::write_file(*heatmap_dir / (frames[i].stem().string() + ".pgm"),
                         dataio::encode_heatmap_pgm(*verdict.heatmap));
    }
    alerts.push_back(pipeline::make_alert(frames[i].filename().string(), i, std::move(verdict)));
  }
  return alerts;
}

inline std::string format_alerts(const std::vector<pipeline::AlertRecord>& alerts) {
  std::string out;
  for (const auto& a : alerts) out += pipeline::format_alert(a) + '\n';
  return out;
}

enum class EvalMode { vae_only, hybrid };

inline EvalMode parse_eval_mode(const std::string& text) {
  if (text == "vae-only") return EvalMode::vae_only;
  if (text == "hybrid") return EvalMode::hybrid;
  throw ArgumentError("unknown eval mode '" + text + "' (expected vae-only or hybrid)");
}

struct EvaluatedFrame {
  fs::path path;
  FrameLabel label = FrameLabel::normal;
  pipeline::HazardVerdict verdict;
};

struct Evaluation {
  std::vector<EvaluatedFrame> frames;
  double threshold = 0.0;

  std::vector<double> scores() const {
    std::vector<double> out;
    for (const auto& f : frames) out.push_back(f.verdict.vae_score);
    return out;
  }
  std::vector<FrameLabel> labels() const {
    std::vector<FrameLabel> out;
    for (const auto& f : frames) out.push_back(f.label);
    return out;
  }
  // VAE-only: every flagged anomaly is called a hazard.
  std::vector<bool> predicted_hazard(EvalMode mode) const {
    std::vector<bool> out;
    for (const auto& f : frames) {
      out.push_back(mode == EvalMode::vae_only ? f.verdict.kind != pipeline::VerdictKind::no_anomaly
                                               : f.verdict.kind == pipeline::VerdictKind::hazard);
    }
    return out;
  }
  evalkit::ConfusionMatrix confusion(EvalMode mode) const {
    return evalkit::confusion_matrix(predicted_hazard(mode), labels());
  }
  std::vector<evalkit::RocPoint> roc(const std::vector<double>& thresholds) const {
    return evalkit::roc_curve(scores(), labels(), thresholds);
  }
};

// Runs the full detector over every row of `labels_csv`; frame paths resolve
// against `data_dir`. Both modes share the same verdicts.
inline Evaluation evaluate(const pipeline::HybridDetector<float>& detector, const fs::path& data_dir,
                           const fs::path& labels_csv, std::uint64_t seed) {
  const auto& cfg = detector.model().config();
  Evaluation out;
  out.threshold = detector.config().threshold;
  const auto rows = dataio::read_labels(labels_csv);
  if (rows.empty()) throw DataError("labels file '" + labels_csv.string() + "' lists no frames");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const fs::path path = data_dir / rows[i].frame_path;
    const Image frame = dataio::load_frame(path, cfg.height, cfg.width);
    out.frames.push_back({path, rows[i].label, detector.classify(frame, seed, i)});
  }
  return out;
}

}  // namespace sidewalk::workflow
