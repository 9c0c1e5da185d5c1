#pragma once

// Hybrid decision flow. A frame whose VAE reconstruction score stays below
// the threshold is normal and never reaches the SVM. Otherwise the encoder
// mean is normalized, PCA-projected and handed to the one-class SVM:
// recognized latents are non-hazardous anomalies, novel ones are hazards and
// get an error heatmap and a bounding box.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sidewalk/errors.hpp"
#include "sidewalk/evalkit.hpp"
#include "sidewalk/latentprep.hpp"
#include "sidewalk/ocsvm.hpp"
#include "sidewalk/tensor.hpp"
#include "sidewalk/vae.hpp"

namespace sidewalk::pipeline {

struct PipelineConfig {
  double threshold = 100.0;      // VAE score units (MSE, 0-255 scale)
  std::size_t samples = 10;      // reparameterized decodes per score
  double mask_sigma = 2.0;       // heatmap mask: value > mean + mask_sigma * stddev
  double min_blob_fraction = 0.005;

  void validate() const {
    if (!(threshold > 0.0)) throw ConfigError("pipeline threshold must be positive");
    if (samples == 0) throw ConfigError("pipeline sample count must be at least 1");
    if (!(min_blob_fraction >= 0.0 && min_blob_fraction <= 1.0)) {
      throw ConfigError("min blob area fraction must lie in [0, 1]");
    }
  }
};

enum class VerdictKind { no_anomaly, nonhazardous_anomaly, hazard };

inline std::string_view to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::no_anomaly: return "no_anomaly";
    case VerdictKind::nonhazardous_anomaly: return "nonhazardous_anomaly";
    case VerdictKind::hazard: return "hazard";
  }
  return "?";
}

inline VerdictKind parse_verdict_kind(std::string_view text) {
  if (text == "no_anomaly") return VerdictKind::no_anomaly;
  if (text == "nonhazardous_anomaly") return VerdictKind::nonhazardous_anomaly;
  if (text == "hazard") return VerdictKind::hazard;
  throw FormatError("unknown verdict kind '" + std::string(text) + "'");
}

// Origin top-left; x = column of the left edge, y = row of the top edge.
struct BoundingBox {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

using Heatmap = Tensor<float>;  // H x W

struct HazardVerdict {
  VerdictKind kind = VerdictKind::no_anomaly;
  double vae_score = 0.0;
  std::optional<double> ocsvm_value;
  std::optional<BoundingBox> bbox;
  std::optional<Heatmap> heatmap;
};

// Per-pixel squared error averaged over channels.
template <typename T>
Heatmap error_heatmap(const Tensor<T>& x, const Tensor<T>& reconstruction) {
  if (x.shape() != reconstruction.shape() || x.rank() != 3) {
    throw DimensionError("error_heatmap: input " + shape_string(x.shape()) + " vs reconstruction " +
                         shape_string(reconstruction.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Heatmap out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t col = 0; col < w; ++col) {
      double sum = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(x.at(ch, y, col)) - static_cast<double>(reconstruction.at(ch, y, col));
        sum += d * d;
      }
      out[y * w + col] = static_cast<float>(sum / static_cast<double>(c));
    }
  }
  return out;
}

// Tight box around the largest 4-connected component of pixels strictly
// above mean + mask_sigma * stddev. Ties between equal-area components go to
// the one found first in raster order.
inline std::optional<BoundingBox> heatmap_to_bbox(const Heatmap& heatmap, const PipelineConfig& config) {
  if (heatmap.rank() != 2) throw DimensionError("heatmap_to_bbox: heatmap must be H x W");
  const std::size_t h = heatmap.dim(0), w = heatmap.dim(1), n = h * w;
  if (n == 0) return std::nullopt;
  double mean = 0.0;
  for (float v : heatmap.values()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : heatmap.values()) var += (v - mean) * (v - mean);
  const double threshold = mean + config.mask_sigma * std::sqrt(var / static_cast<double>(n));

  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = static_cast<double>(heatmap[i]) > threshold;

  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::size_t> stack;
  std::size_t best_area = 0;
  BoundingBox best;
  for (std::size_t start = 0; start < n; ++start) {
    if (!mask[start] || seen[start]) continue;
    std::size_t area = 0, x0 = w, y0 = h, x1 = 0, y1 = 0;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t py = p / w, px = p % w;
      ++area;
      x0 = std::min(x0, px);
      x1 = std::max(x1, px);
      y0 = std::min(y0, py);
      y1 = std::max(y1, py);
      auto visit = [&](std::size_t q) {
        if (mask[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (px > 0) visit(p - 1);
      if (px + 1 < w) visit(p + 1);
      if (py > 0) visit(p - w);
      if (py + 1 < h) visit(p + w);
    }
    if (area > best_area) {
      best_area = area;
      best = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    }
  }
  if (best_area == 0 || static_cast<double>(best_area) < config.min_blob_fraction * static_cast<double>(n)) {
    return std::nullopt;
  }
  return best;
}

// Normalizer -> PCA -> one-class SVM over encoder means.
struct LatentClassifier {
  latentprep::NormalizerModel normalizer;
  latentprep::PcaModel pca;
  ocsvm::OcsvmModel svm;

  // Throws ConfigError when the three stages do not chain for `latent_dim`.
  void validate(std::size_t latent_dim) const {
    if (normalizer.features() != latent_dim) {
      throw ConfigError("normalizer expects " + std::to_string(normalizer.features()) +
                        " features but the VAE latent has " + std::to_string(latent_dim));
    }
    if (pca.input_dim() != latent_dim) {
      throw ConfigError("PCA expects " + std::to_string(pca.input_dim()) + " inputs but the VAE latent has " +
                        std::to_string(latent_dim));
    }
    if (svm.dimension() != pca.output_dim()) {
      throw ConfigError("OCSVM expects " + std::to_string(svm.dimension()) + " features but PCA emits " +
                        std::to_string(pca.output_dim()));
    }
  }

  std::vector<double> features(std::span<const double> mu) const {
    return latentprep::pca_apply(pca, latentprep::normalizer_apply(normalizer, mu));
  }

  double operator()(std::span<const double> mu) const { return ocsvm::decision_value(svm, features(mu)); }
};

// Scoring noise for frame `index` of a run, independent of processing order.
inline std::uint64_t frame_seed(std::uint64_t run_seed, std::uint64_t index) {
  return vae::derive_seed(run_seed, index);
}

// `classifier(mu)` returns the SVM decision value for an encoder mean; it is
// only invoked for frames at or above the threshold.
template <typename T, typename Classifier>
HazardVerdict classify_frame(const vae::VaeModel<T>& model, const Classifier& classifier,
                             const PipelineConfig& config, const Tensor<T>& frame, std::uint64_t seed) {
  const vae::EncoderOutput<T> enc = model.encode(frame);
  HazardVerdict verdict;
  verdict.vae_score = vae::reconstruction_score(model, enc, frame, config.samples, seed);
  if (vae::anomaly_flag(verdict.vae_score, config.threshold).value == 1) return verdict;

  const std::vector<double> mu(enc.mu.begin(), enc.mu.end());
  verdict.ocsvm_value = classifier(std::span<const double>(mu));
  if (*verdict.ocsvm_value >= 0.0) {
    verdict.kind = VerdictKind::nonhazardous_anomaly;
    return verdict;
  }
  verdict.kind = VerdictKind::hazard;
  verdict.heatmap = error_heatmap(frame, model.decode(enc.mu));
  verdict.bbox = heatmap_to_bbox(*verdict.heatmap, config);
  return verdict;
}

// Loaded, dimension-checked models ready for per-frame classification.
template <typename T>
class HybridDetector {
 public:
  HybridDetector(vae::VaeModel<T> model, LatentClassifier classifier, PipelineConfig config)
      : model_(std::move(model)), classifier_(std::move(classifier)), config_(config) {
    config_.validate();
    classifier_.validate(model_.latent_dim());
  }

  HazardVerdict classify(const Tensor<T>& frame, std::uint64_t run_seed, std::uint64_t index) const {
    return classify_frame(model_, classifier_, config_, frame, frame_seed(run_seed, index));
  }

  const vae::VaeModel<T>& model() const noexcept { return model_; }
  const LatentClassifier& classifier() const noexcept { return classifier_; }
  const PipelineConfig& config() const noexcept { return config_; }

 private:
  vae::VaeModel<T> model_;
  LatentClassifier classifier_;
  PipelineConfig config_;
};

struct AlertRecord {
  std::string frame;
  double timestamp = 0.0;  // seconds of video time
  HazardVerdict verdict;
};

inline constexpr double kFrameRate = 30.0;

inline AlertRecord make_alert(std::string frame, std::size_t index, HazardVerdict verdict) {
  return {std::move(frame), static_cast<double>(index) / kFrameRate, std::move(verdict)};
}

// frame,kind,vae_score,ocsvm_value,bbox_x,bbox_y,bbox_w,bbox_h
inline std::string format_alert(const AlertRecord& r) {
  using evalkit::format_number;
  std::string line = r.frame + ',' + std::string(to_string(r.verdict.kind)) + ',' +
                     format_number(r.verdict.vae_score) + ',';
  if (r.verdict.ocsvm_value) line += format_number(*r.verdict.ocsvm_value);
  if (r.verdict.bbox) {
    const BoundingBox& b = *r.verdict.bbox;
    line += ',' + std::to_string(b.x) + ',' + std::to_string(b.y) + ',' + std::to_string(b.width) + ',' +
            std::to_string(b.height);
  } else {
    line += ",,,,";
  }
  return line;
}

}  // namespace sidewalk::pipeline
