#pragma once

// Deterministic synthetic sidewalk corpus. Normal frames are a gray
// value-noise "concrete" texture crossed by darker expansion joints; the
// non-hazardous anomaly is a dark manhole-like disk; the hazard is a large
// bright irregular polygon crossed by dark cracks. Every frame draws from its own
// RNG stream seeded by (corpus seed, split, label, index).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sidewalk/errors.hpp"
#include "sidewalk/evalkit.hpp"
#include "sidewalk/image_io.hpp"
#include "sidewalk/vae.hpp"

namespace sidewalk::dataio {

struct TextureParams {
  double base = 0.56;              // mean concrete gray
  double noise_amplitude = 0.07;   // value-noise amplitude
  std::size_t cell = 0;            // value-noise lattice spacing, 0 = width / 8
  double speckle = 0.01;           // per-pixel uniform noise
  double joint_depth = 0.12;       // darkening of expansion joints
  double joint_spacing = 0.45;     // joint period as a fraction of height
  double brightness_jitter = 0.12; // per-frame factor in [1 - j, 1 + j]
};

struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t train_normal = 2000;
  std::size_t test_normal = 300;
  std::size_t test_nonhazard = 150;
  std::size_t test_hazard = 150;
  std::size_t ocsvm_nonhazard = 150;
  double contamination = 0.0;  // fraction of training frames that carry a disk
  TextureParams texture;

  void validate() const {
    if (width < 16 || height < 16) throw ArgumentError("synth: frames must be at least 16 x 16");
    if (!(contamination >= 0.0 && contamination < 1.0)) throw ArgumentError("synth: contamination must lie in [0, 1)");
  }
};

struct SynthFrame {
  Image image;
  Tensor<float> mask;  // H x W, 1 inside the injected anomaly
  evalkit::FrameLabel label = evalkit::FrameLabel::normal;
};

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

class ValueNoise {
 public:
  ValueNoise(std::size_t height, std::size_t width, std::size_t cell, std::mt19937_64& rng)
      : cell_(static_cast<double>(cell)), cols_(width / cell + 2), rows_(height / cell + 2), lattice_(cols_ * rows_) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : lattice_) v = u(rng);
  }

  double operator()(double y, double x) const {
    const double gy = y / cell_, gx = x / cell_;
    const auto iy = static_cast<std::size_t>(gy), ix = static_cast<std::size_t>(gx);
    const double ty = smoothstep(gy - static_cast<double>(iy)), tx = smoothstep(gx - static_cast<double>(ix));
    auto at = [&](std::size_t r, std::size_t c) { return lattice_[std::min(r, rows_ - 1) * cols_ + std::min(c, cols_ - 1)]; };
    const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
    const double bottom = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
    return top * (1 - ty) + bottom * ty;
  }

 private:
  double cell_;
  std::size_t cols_, rows_;
  std::vector<double> lattice_;
};

// Even-odd rule at pixel centres.
inline bool inside_polygon(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) inside = !inside;
  }
  return inside;
}

}  // namespace detail

inline SynthFrame render_frame(const SynthSpec& spec, evalkit::FrameLabel label, std::uint64_t frame_seed) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width;
  const TextureParams& tex = spec.texture;
  std::mt19937_64 rng(frame_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t cell = tex.cell ? tex.cell : std::max<std::size_t>(4, w / 8);
  const detail::ValueNoise coarse(h, w, cell, rng);
  const detail::ValueNoise fine(h, w, std::max<std::size_t>(2, cell / 2), rng);
  const double period = std::max(4.0, tex.joint_spacing * static_cast<double>(h));
  const double phase = unit(rng) * period;
  constexpr std::array<double, 3> kTint{1.0, 0.97, 0.92};

  SynthFrame frame{Image({3, h, w}), Tensor<float>({h, w}), label};
  std::vector<double> gray(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const bool joint = std::fmod(static_cast<double>(y) + phase, period) < 2.0;
    for (std::size_t x = 0; x < w; ++x) {
      const double yc = static_cast<double>(y) + 0.5, xc = static_cast<double>(x) + 0.5;
      double v = tex.base + tex.noise_amplitude * (coarse(yc, xc) + 0.5 * fine(yc, xc));
      v += tex.speckle * (2.0 * unit(rng) - 1.0);
      if (joint) v -= tex.joint_depth;
      gray[y * w + x] = v;
    }
  }

  const double span = static_cast<double>(std::min(h, w));
  std::array<double, 3> paint{0, 0, 0};
  std::vector<std::uint8_t> inside(h * w, 0);
  std::vector<double> overlay(h * w, 0.0);
  if (label == evalkit::FrameLabel::anomaly_nonhazard) {
    const double r = span * (0.22 + 0.06 * unit(rng));
    const double cx = r + 1 + unit(rng) * (static_cast<double>(w) - 2 * r - 2);
    const double cy = r + 1 + unit(rng) * (static_cast<double>(h) - 2 * r - 2);
    paint = {0.17, 0.17, 0.18};
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        if (dx * dx + dy * dy <= r * r) {
          inside[y * w + x] = 1;
          overlay[y * w + x] = 0.02 * (gray[y * w + x] - tex.base);
        }
      }
    }
  } else if (label == evalkit::FrameLabel::hazard) {
    const double radius = span * (0.28 + 0.08 * unit(rng));
    const double cx = radius + 1 + unit(rng) * (static_cast<double>(w) - 2 * radius - 2);
    const double cy = radius + 1 + unit(rng) * (static_cast<double>(h) - 2 * radius - 2);
    const auto vertices = 7 + static_cast<std::size_t>(unit(rng) * 5);
    std::vector<std::array<double, 2>> poly;
    const double step = 2.0 * std::numbers::pi / static_cast<double>(vertices);
    for (std::size_t k = 0; k < vertices; ++k) {
      const double angle = step * (static_cast<double>(k) + 0.8 * (unit(rng) - 0.5));
      const double rr = radius * (0.45 + 0.55 * unit(rng));
      poly.push_back({cx + rr * std::cos(angle), cy + rr * std::sin(angle)});
    }
    const double theta = unit(rng) * std::numbers::pi;
    const double stripe = 6.0 + 3.0 * unit(rng);
    paint = {0.95, 0.84, 0.55};
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double xc = static_cast<double>(x) + 0.5, yc = static_cast<double>(y) + 0.5;
        if (!detail::inside_polygon(poly, xc, yc)) continue;
        inside[y * w + x] = 1;
        const double u = (xc * std::cos(theta) + yc * std::sin(theta)) / stripe;
        // Dark cracks across a bright blob.
        overlay[y * w + x] = (u - std::floor(u)) < 0.2 ? -0.8 : 0.0;
      }
    }
  }

  for (std::size_t p = 0; p < h * w; ++p) {
    frame.mask[p] = inside[p] ? 1.0f : 0.0f;
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = inside[p] ? paint[c] + overlay[p] : gray[p] * kTint[c];
      frame.image[c * h * w + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  const double factor = 1.0 + tex.brightness_jitter * (2.0 * unit(rng) - 1.0);
  frame.image = augment_brightness(std::move(frame.image), factor);
  return frame;
}

enum class Split : std::uint64_t { train = 1, ocsvm = 2, test = 3 };

inline std::uint64_t synth_frame_seed(const SynthSpec& spec, Split split, evalkit::FrameLabel label, std::size_t index) {
  const std::uint64_t stream = static_cast<std::uint64_t>(split) * 8 + static_cast<std::uint64_t>(label);
  return vae::derive_seed(vae::derive_seed(spec.seed, stream), index);
}

struct CorpusLayout {
  std::filesystem::path root;
  std::filesystem::path train_labels() const { return root / "train" / "labels.csv"; }
  std::filesystem::path ocsvm_labels() const { return root / "ocsvm" / "labels.csv"; }
  std::filesystem::path test_labels() const { return root / "test" / "labels.csv"; }
  // Ground-truth mask for an anomaly frame `<split>/<stem>.ppm`.
  static std::filesystem::path mask_for(const std::filesystem::path& frame) {
    return frame.parent_path() / "masks" / (frame.stem().string() + ".pgm");
  }
};

// Writes <out>/{train,ocsvm,test}/ frames + labels.csv, and masks for every
// anomaly frame under <split>/masks/.
inline CorpusLayout synth_corpus(const SynthSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out)) throw IoError("cannot create output directory '" + out.string() + "'");

  using evalkit::FrameLabel;
  auto write_split = [&](Split split, const std::string& dir,
                         const std::vector<std::pair<FrameLabel, std::size_t>>& plan) {
    std::vector<LabelEntry> labels;
    for (const auto& [label, count] : plan) {
      for (std::size_t i = 0; i < count; ++i) {
        const SynthFrame f = render_frame(spec, label, synth_frame_seed(spec, split, label, i));
        char name[64];
        std::snprintf(name, sizeof name, "%s_%05zu.ppm", std::string(evalkit::to_string(label)).c_str(), i);
        const auto path = out / dir / name;
        write_file(path, encode_ppm(f.image));
        if (label != FrameLabel::normal) write_file(CorpusLayout::mask_for(path), encode_pgm(f.mask));
        labels.push_back({name, label});
      }
    }
    write_file(out / dir / "labels.csv", format_labels_csv(labels));
  };

  const auto contaminated = static_cast<std::size_t>(std::llround(spec.contamination * static_cast<double>(spec.train_normal)));
  write_split(Split::train, "train",
              {{FrameLabel::normal, spec.train_normal - contaminated}, {FrameLabel::anomaly_nonhazard, contaminated}});
  write_split(Split::ocsvm, "ocsvm", {{FrameLabel::anomaly_nonhazard, spec.ocsvm_nonhazard}});
  write_split(Split::test, "test",
              {{FrameLabel::normal, spec.test_normal},
               {FrameLabel::anomaly_nonhazard, spec.test_nonhazard},
               {FrameLabel::hazard, spec.test_hazard}});
  return {out};
}

}  // namespace sidewalk::dataio
