#pragma once

// Model bundle file:
//
//   "VOCS" | u32 version | entry*
//   entry = u16 name_len | name | u8 rank | u32 dim * rank | u8 dtype | data
//
// All integers little-endian; dtype 0 = f32, 1 = f64. An entry named
// "@section/<name>" (rank 1, dim 0, dtype 0) opens a section; entries up to
// the next marker belong to it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sidewalk/errors.hpp"
#include "sidewalk/image_io.hpp"
#include "sidewalk/latentprep.hpp"
#include "sidewalk/ocsvm.hpp"
#include "sidewalk/pipeline.hpp"
#include "sidewalk/vae.hpp"

namespace sidewalk::dataio {

inline constexpr std::string_view kBundleMagic = "VOCS";
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr std::string_view kSectionPrefix = "@section/";

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct BundleEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::variant<std::vector<float>, std::vector<double>> data;

  DType dtype() const { return data.index() == 0 ? DType::f32 : DType::f64; }
  std::size_t count() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
  }
  friend bool operator==(const BundleEntry&, const BundleEntry&) = default;
};

class Section {
 public:
  void put(BundleEntry entry) {
    if (index_.count(entry.name)) throw ConfigError("duplicate bundle entry '" + entry.name + "'");
    index_.emplace(entry.name, entries_.size());
    entries_.push_back(std::move(entry));
  }
  void put_scalar(const std::string& name, double value) { put({name, {}, std::vector<double>{value}}); }
  void put_vector(const std::string& name, const std::vector<double>& v) {
    put({name, {static_cast<std::uint32_t>(v.size())}, v});
  }
  void put_tensor(const std::string& name, const Tensor<float>& t) {
    std::vector<std::uint32_t> dims(t.shape().begin(), t.shape().end());
    put({name, std::move(dims), t.to_vector()});
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const BundleEntry& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError("bundle entry '" + name + "' missing");
    return entries_[it->second];
  }
  double scalar(const std::string& name) const {
    const auto v = vector(name);
    if (v.size() != 1) throw FormatError("bundle entry '" + name + "' is not a scalar");
    return v.front();
  }
  std::vector<double> vector(const std::string& name) const {
    return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, get(name).data);
  }
  Tensor<float> tensor(const std::string& name) const {
    const BundleEntry& e = get(name);
    if (e.dtype() != DType::f32) throw FormatError("bundle entry '" + name + "' is not f32");
    Shape shape(e.dims.begin(), e.dims.end());
    return Tensor<float>(shape, std::get<std::vector<float>>(e.data));
  }
  const std::vector<BundleEntry>& entries() const noexcept { return entries_; }
  friend bool operator==(const Section& a, const Section& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<BundleEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct ModelBundle {
  std::vector<std::pair<std::string, Section>> sections;

  bool has(const std::string& name) const {
    for (const auto& [n, s] : sections) {
      if (n == name) return true;
    }
    return false;
  }
  const Section& section(const std::string& name) const {
    for (const auto& [n, s] : sections) {
      if (n == name) return s;
    }
    throw FormatError("bundle has no '" + name + "' section");
  }
  // Replaces an existing section of the same name.
  void set(const std::string& name, Section section) {
    for (auto& [n, s] : sections) {
      if (n == name) {
        s = std::move(section);
        return;
      }
    }
    sections.emplace_back(name, std::move(section));
  }
  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

namespace detail {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  template <typename U>
  U get(const std::string& context) {
    need(sizeof(U), context);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }
  std::string_view take(std::size_t n, const std::string& context) {
    need(n, context);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n, const std::string& context) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated bundle " + context);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void write_entry(std::string& out, const BundleEntry& e) {
  if (e.name.size() > 0xffff) throw FormatError("bundle entry name too long");
  if (e.dims.size() > 0xff) throw FormatError("bundle entry '" + e.name + "' has too many dims");
  std::size_t volume = 1;
  for (auto d : e.dims) volume *= d;
  if (volume != e.count()) throw FormatError("bundle entry '" + e.name + "' dims do not match its data");
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
  out += e.name;
  out.push_back(static_cast<char>(e.dims.size()));
  for (auto d : e.dims) put_le<std::uint32_t>(out, d);
  out.push_back(static_cast<char>(e.dtype()));
  std::visit(
      [&](const auto& values) {
        for (auto v : values) {
          if constexpr (sizeof(v) == 4) {
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
          } else {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
          }
        }
      },
      e.data);
}

}  // namespace detail

inline std::string serialize_bundle(const ModelBundle& bundle) {
  std::string out(kBundleMagic);
  detail::put_le<std::uint32_t>(out, kBundleVersion);
  for (const auto& [name, section] : bundle.sections) {
    detail::write_entry(out, {std::string(kSectionPrefix) + name, {0}, std::vector<float>{}});
    for (const auto& e : section.entries()) {
      if (e.name.starts_with("@")) throw FormatError("entry names starting with '@' are reserved");
      detail::write_entry(out, e);
    }
  }
  return out;
}

// Parses the whole stream before returning; any error leaves nothing loaded.
inline ModelBundle deserialize_bundle(std::string_view bytes) {
  if (bytes.size() < kBundleMagic.size() || bytes.substr(0, kBundleMagic.size()) != kBundleMagic) {
    throw FormatError("not a model bundle (bad magic)");
  }
  detail::Reader in(bytes.substr(kBundleMagic.size()));
  const auto version = in.get<std::uint32_t>("header");
  if (version > kBundleVersion) {
    throw VersionError("bundle version " + std::to_string(version) + " is newer than supported version " +
                       std::to_string(kBundleVersion));
  }
  ModelBundle bundle;
  Section* current = nullptr;
  while (!in.done()) {
    const auto name_len = in.get<std::uint16_t>("entry header");
    const std::string name(in.take(name_len, "entry name"));
    const auto rank = in.get<std::uint8_t>("entry '" + name + "'");
    std::vector<std::uint32_t> dims(rank);
    std::size_t volume = 1;
    for (auto& d : dims) {
      d = in.get<std::uint32_t>("entry '" + name + "' dims");
      volume *= d;
    }
    const auto dtype = in.get<std::uint8_t>("entry '" + name + "' dtype");
    BundleEntry entry{name, dims, std::vector<float>{}};
    if (dtype == static_cast<std::uint8_t>(DType::f32)) {
      std::vector<float> v(volume);
      for (float& x : v) x = std::bit_cast<float>(in.get<std::uint32_t>("entry '" + name + "' data"));
      entry.data = std::move(v);
    } else if (dtype == static_cast<std::uint8_t>(DType::f64)) {
      std::vector<double> v(volume);
      for (double& x : v) x = std::bit_cast<double>(in.get<std::uint64_t>("entry '" + name + "' data"));
      entry.data = std::move(v);
    } else {
      throw FormatError("entry '" + name + "' has unknown dtype code " + std::to_string(dtype));
    }
    if (name.starts_with(kSectionPrefix)) {
      bundle.sections.emplace_back(name.substr(kSectionPrefix.size()), Section{});
      current = &bundle.sections.back().second;
      continue;
    }
    if (!current) throw FormatError("entry '" + name + "' appears before any section marker");
    current->put(std::move(entry));
  }
  return bundle;
}

inline void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  write_file(path, serialize_bundle(bundle));
}

inline ModelBundle load_bundle(const std::filesystem::path& path) {
  return deserialize_bundle(read_file(path));
}

// --- model <-> section conversions ---------------------------------------

inline Section to_section(const vae::VaeModel<float>& model) {
  Section s;
  const auto& c = model.config();
  s.put_scalar("config.channels", static_cast<double>(c.channels));
  s.put_scalar("config.height", static_cast<double>(c.height));
  s.put_scalar("config.width", static_cast<double>(c.width));
  s.put_vector("config.widths", {static_cast<double>(c.widths[0]), static_cast<double>(c.widths[1]),
                                 static_cast<double>(c.widths[2]), static_cast<double>(c.widths[3])});
  s.put_scalar("config.latent", static_cast<double>(c.latent));
  for (const auto& p : model.params()) s.put_tensor(p.name, p.value);
  return s;
}

inline vae::VaeModel<float> vae_from_section(const Section& s) {
  vae::VaeConfig c;
  auto count = [&](const std::string& n) { return static_cast<std::size_t>(s.scalar(n)); };
  c.channels = count("config.channels");
  c.height = count("config.height");
  c.width = count("config.width");
  const auto widths = s.vector("config.widths");
  if (widths.size() != 4) throw FormatError("bundle VAE config must list 4 encoder widths");
  for (std::size_t i = 0; i < 4; ++i) c.widths[i] = static_cast<std::size_t>(widths[i]);
  c.latent = count("config.latent");
  for (const char* name : {"canonical", "desk"}) {
    auto preset = vae::VaeConfig::from_preset(name);
    preset.preset = c.preset;
    if (preset == c) c.preset = name;
  }
  vae::VaeModel<float> model(c);
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    const std::string& name = model.params().name(p);
    Tensor<float> t = s.tensor(name);
    if (t.shape() != model.params()[p].shape()) {
      throw FormatError("bundle tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(model.params()[p].shape()));
    }
    model.params()[p] = std::move(t);
  }
  return model;
}

inline Section to_section(const latentprep::NormalizerModel& m) {
  Section s;
  s.put_vector("min", m.min);
  s.put_vector("max", m.max);
  return s;
}

inline latentprep::NormalizerModel normalizer_from_section(const Section& s) {
  latentprep::NormalizerModel m{s.vector("min"), s.vector("max")};
  if (m.min.size() != m.max.size()) throw FormatError("normalizer min/max lengths differ");
  return m;
}

inline Section to_section(const latentprep::PcaModel& m) {
  Section s;
  s.put_vector("mean", m.mean);
  std::vector<double> flat;
  for (const auto& row : m.components) flat.insert(flat.end(), row.begin(), row.end());
  s.put({"components", {static_cast<std::uint32_t>(m.components.size()), static_cast<std::uint32_t>(m.mean.size())}, flat});
  s.put_vector("explained_variance", m.explained_variance);
  s.put_scalar("total_variance", m.total_variance);
  s.put_scalar("retained_fraction", m.retained_fraction);
  return s;
}

inline latentprep::PcaModel pca_from_section(const Section& s) {
  latentprep::PcaModel m;
  m.mean = s.vector("mean");
  const BundleEntry& comp = s.get("components");
  if (comp.dims.size() != 2 || comp.dims[1] != m.mean.size()) throw FormatError("PCA components do not match the mean");
  const auto flat = s.vector("components");
  for (std::size_t k = 0; k < comp.dims[0]; ++k) {
    m.components.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(k * comp.dims[1]),
                              flat.begin() + static_cast<std::ptrdiff_t>((k + 1) * comp.dims[1]));
  }
  m.explained_variance = s.vector("explained_variance");
  m.total_variance = s.scalar("total_variance");
  m.retained_fraction = s.scalar("retained_fraction");
  return m;
}

inline Section to_section(const ocsvm::OcsvmModel& m) {
  Section s;
  std::vector<double> flat;
  for (const auto& sv : m.support_vectors) flat.insert(flat.end(), sv.begin(), sv.end());
  s.put({"support_vectors", {static_cast<std::uint32_t>(m.support_vectors.size()), static_cast<std::uint32_t>(m.dimension())}, flat});
  s.put_vector("alphas", m.alphas);
  s.put_scalar("bias", m.bias);
  s.put_scalar("gamma", m.kernel.gamma);
  s.put_scalar("nu", m.nu);
  s.put_scalar("n_train", static_cast<double>(m.n_train));
  s.put_scalar("converged", m.converged ? 1.0 : 0.0);
  return s;
}

inline ocsvm::OcsvmModel ocsvm_from_section(const Section& s) {
  ocsvm::OcsvmModel m;
  const BundleEntry& sv = s.get("support_vectors");
  if (sv.dims.size() != 2) throw FormatError("support_vectors must be 2-D");
  const auto flat = s.vector("support_vectors");
  for (std::size_t i = 0; i < sv.dims[0]; ++i) {
    m.support_vectors.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * sv.dims[1]),
                                   flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * sv.dims[1]));
  }
  m.alphas = s.vector("alphas");
  if (m.alphas.size() != m.support_vectors.size()) throw FormatError("OCSVM alpha count does not match support vectors");
  m.bias = s.scalar("bias");
  m.kernel.gamma = s.scalar("gamma");
  m.nu = s.scalar("nu");
  m.n_train = static_cast<std::size_t>(s.scalar("n_train"));
  m.converged = s.scalar("converged") != 0.0;
  return m;
}

inline Section to_section(const pipeline::PipelineConfig& c) {
  Section s;
  s.put_scalar("threshold", c.threshold);
  s.put_scalar("samples", static_cast<double>(c.samples));
  s.put_scalar("mask_sigma", c.mask_sigma);
  s.put_scalar("min_blob_fraction", c.min_blob_fraction);
  return s;
}

inline pipeline::PipelineConfig pipeline_config_from_section(const Section& s) {
  pipeline::PipelineConfig c;
  c.threshold = s.scalar("threshold");
  c.samples = static_cast<std::size_t>(s.scalar("samples"));
  c.mask_sigma = s.scalar("mask_sigma");
  c.min_blob_fraction = s.scalar("min_blob_fraction");
  return c;
}

inline pipeline::LatentClassifier classifier_from_bundle(const ModelBundle& b) {
  return {normalizer_from_section(b.section("normalizer")), pca_from_section(b.section("pca")),
          ocsvm_from_section(b.section("ocsvm"))};
}

}  // namespace sidewalk::dataio
