#pragma once

// Binary NetPBM codecs (P6 colour, P5 grayscale), resizing, brightness
// augmentation, and the labels CSV used by every dataset directory.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sidewalk/errors.hpp"
#include "sidewalk/evalkit.hpp"
#include "sidewalk/tensor.hpp"

namespace sidewalk::dataio {

using Image = Tensor<float>;  // C x H x W, values in [0, 1]

struct FrameRecord {
  std::filesystem::path path;
  Image image;
  std::optional<evalkit::FrameLabel> label;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

namespace detail {

struct PnmHeader {
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic) {
    throw FormatError("not a binary " + std::string(magic) + " stream (magic '" +
                      std::string(bytes.substr(0, std::min<std::size_t>(2, bytes.size()))) + "')");
  }
  std::size_t pos = 2;
  auto next_number = [&](const char* what) -> std::size_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n' && bytes[pos] != '\r') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError(std::string("truncated or malformed header: missing ") + what);
    }
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > (1u << 30)) throw FormatError(std::string("header value too large: ") + what);
      ++pos;
    }
    return value;
  };
  PnmHeader h;
  h.width = next_number("width");
  h.height = next_number("height");
  h.maxval = next_number("maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("truncated header: no whitespace after maxval");
  }
  h.data_offset = pos + 1;
  if (h.width == 0 || h.height == 0) throw FormatError("image has zero width or height");
  if (h.maxval != 255) {
    throw FormatError("unsupported maxval " + std::to_string(h.maxval) + " (only 255 is supported)");
  }
  return h;
}

// Round half up to the nearest 8-bit level.
inline unsigned char to_byte(float v) {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace detail

// P6: header then interleaved RGB bytes; returns a 3 x H x W tensor.
inline Image decode_ppm(std::string_view bytes) {
  const auto h = detail::parse_pnm_header(bytes, "P6");
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < 3 * n) {
    throw FormatError("truncated P6 data: expected " + std::to_string(3 * n) + " bytes, found " +
                      std::to_string(bytes.size() - h.data_offset));
  }
  Image img({3, h.height, h.width});
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c) img[c * n + p] = static_cast<float>(src[3 * p + c]) / 255.0f;
  }
  return img;
}

inline std::string encode_ppm(const Image& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw DimensionError("encode_ppm: expected a 3 x H x W image, got " + shape_string(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2), n = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c) out[header + 3 * p + c] = static_cast<char>(detail::to_byte(img[c * n + p]));
  }
  return out;
}

// P5 grayscale, returned as H x W.
inline Tensor<float> decode_pgm(std::string_view bytes) {
  const auto h = detail::parse_pnm_header(bytes, "P5");
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < n) throw FormatError("truncated P5 data");
  Tensor<float> img({h.height, h.width});
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::size_t p = 0; p < n; ++p) img[p] = static_cast<float>(src[p]) / 255.0f;
  return img;
}

inline std::string encode_pgm(const Tensor<float>& gray) {
  if (gray.rank() != 2) throw DimensionError("encode_pgm: expected an H x W image");
  const std::size_t h = gray.dim(0), w = gray.dim(1);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (float v : gray.values()) out.push_back(static_cast<char>(detail::to_byte(v)));
  return out;
}

// Heatmap scaled so its maximum maps to white.
inline std::string encode_heatmap_pgm(const Tensor<float>& heatmap) {
  Tensor<float> scaled = heatmap;
  const float peak = heatmap.empty() ? 0.0f : *std::max_element(heatmap.values().begin(), heatmap.values().end());
  if (peak > 0.0f) {
    for (float& v : scaled.values()) v /= peak;
  }
  return encode_pgm(scaled);
}

// Half-pixel-centred bilinear interpolation.
inline Image resize_bilinear(const Image& img, std::size_t new_height, std::size_t new_width) {
  if (new_height == 0 || new_width == 0) throw ArgumentError("resize_bilinear: target dims must be positive");
  if (img.rank() != 3) throw DimensionError("resize_bilinear: expected C x H x W");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h == new_height && w == new_width) return img;
  Image out({c, new_height, new_width});
  auto source = [](std::size_t dst, std::size_t in, std::size_t out_n) {
    const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t y = 0; y < new_height; ++y) {
    const double sy = source(y, h, new_height);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < new_width; ++x) {
      const double sx = source(x, w, new_width);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = img.at(ch, y0, x0) * (1.0 - fx) + img.at(ch, y0, x1) * fx;
        const double bottom = img.at(ch, y1, x0) * (1.0 - fx) + img.at(ch, y1, x1) * fx;
        out.at(ch, y, x) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

// Multiply every value by `factor`, clamped to [0, 1].
inline Image augment_brightness(Image img, double factor) {
  if (!(factor > 0.0)) throw ArgumentError("augment_brightness: factor must be positive");
  for (float& v : img.values()) v = static_cast<float>(std::clamp(static_cast<double>(v) * factor, 0.0, 1.0));
  return img;
}

struct LabelEntry {
  std::string frame_path;  // relative to the CSV's directory
  evalkit::FrameLabel label;
};

inline constexpr std::string_view kLabelsHeader = "frame_path,label";

inline std::string format_labels_csv(const std::vector<LabelEntry>& entries) {
  std::string out(kLabelsHeader);
  out += '\n';
  for (const auto& e : entries) out += e.frame_path + ',' + std::string(evalkit::to_string(e.label)) + '\n';
  return out;
}

inline std::vector<LabelEntry> parse_labels_csv(std::string_view text) {
  std::vector<LabelEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      if (line != kLabelsHeader) throw FormatError("labels CSV must start with '" + std::string(kLabelsHeader) + "'");
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError("labels CSV line " + std::to_string(line_no) + " has no comma");
    try {
      out.push_back({line.substr(0, comma), evalkit::parse_label(line.substr(comma + 1))});
    } catch (const FormatError& e) {
      throw FormatError("labels CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (header) throw FormatError("labels CSV is empty");
  return out;
}

inline std::vector<LabelEntry> read_labels(const std::filesystem::path& csv) {
  return parse_labels_csv(read_file(csv));
}

inline Image load_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Frame resized to the model's H x W when needed.
inline Image load_frame(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  Image img = load_ppm(path);
  if (img.dim(1) != height || img.dim(2) != width) img = resize_bilinear(img, height, width);
  return img;
}

// Frames listed in `csv`, optionally restricted to one label.
inline std::vector<FrameRecord> load_labeled_frames(const std::filesystem::path& csv, std::size_t height,
                                                    std::size_t width,
                                                    std::optional<evalkit::FrameLabel> only = std::nullopt) {
  std::vector<FrameRecord> out;
  const auto base = csv.parent_path();
  for (const auto& entry : read_labels(csv)) {
    if (only && entry.label != *only) continue;
    const auto path = base / entry.frame_path;
    out.push_back({path, load_frame(path, height, width), entry.label});
  }
  return out;
}

// All *.ppm files in a directory, sorted by name.
inline std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sidewalk::dataio
