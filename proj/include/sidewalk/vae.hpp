#pragma once

// Convolutional variational autoencoder: four stride-2 conv layers down to a
// C x H/16 x W/16 bottleneck, linear heads for the posterior mean and
// log-variance, a linear expansion back to the bottleneck and four stride-2
// transposed convs up to the input resolution.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sidewalk/errors.hpp"
#include "sidewalk/nn.hpp"
#include "sidewalk/tensor.hpp"

namespace sidewalk::vae {

inline constexpr std::size_t kEncoderKernel = 5;
inline constexpr std::size_t kEncoderPadding = 2;
inline constexpr std::size_t kDecoderKernel = 4;
inline constexpr std::size_t kDecoderPadding = 1;
inline constexpr std::size_t kStride = 2;
inline constexpr std::size_t kDownsample = 16;

struct VaeConfig {
  std::string preset = "custom";
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<std::size_t, 4> widths{};
  std::size_t latent = 0;

  // 3 x 240 x 320 input, 237,776,419 parameters.
  static VaeConfig canonical() { return {"canonical", 3, 240, 320, {32, 64, 128, 256}, 1024}; }
  static VaeConfig desk() { return {"desk", 3, 64, 64, {8, 16, 32, 64}, 64}; }

  static VaeConfig from_preset(const std::string& name) {
    if (name == "canonical") return canonical();
    if (name == "desk") return desk();
    throw ConfigError("unknown VAE preset '" + name + "' (expected desk or canonical)");
  }

  void validate() const {
    if (channels == 0 || latent == 0) throw ConfigError("VAE channels and latent size must be positive");
    if (height == 0 || width == 0 || height % kDownsample || width % kDownsample) {
      throw ConfigError("VAE spatial dims " + std::to_string(height) + "x" + std::to_string(width) +
                        " must be positive multiples of 16");
    }
    for (std::size_t w : widths) {
      if (w == 0) throw ConfigError("VAE encoder widths must be positive");
    }
  }

  Shape input_shape() const { return {channels, height, width}; }
  Shape bottleneck_shape() const { return {widths.back(), height / kDownsample, width / kDownsample}; }
  std::size_t flatten_length() const { return shape_volume(bottleneck_shape()); }

  friend bool operator==(const VaeConfig&, const VaeConfig&) = default;
};

// One printed row of the architecture summary.
struct ArchitectureRow {
  std::string name;
  nn::LayerSpec spec;
  Shape output;
  std::size_t parameters = 0;
};

inline std::vector<ArchitectureRow> architecture(const VaeConfig& cfg) {
  cfg.validate();
  std::vector<ArchitectureRow> rows;
  Shape shape = cfg.input_shape();
  auto push = [&](const nn::LayerSpec& spec) {
    shape = spec.output_shape(shape);
    rows.push_back({std::string(nn::layer_kind_name(spec.kind)) + "-" +
                        std::to_string(rows.size() + 1),
                    spec, shape, spec.parameter_count()});
  };
  std::size_t in = cfg.channels;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    push(nn::LayerSpec::conv(in, cfg.widths[i], kEncoderKernel, kStride, kEncoderPadding));
    if (i + 1 < cfg.widths.size()) push(nn::LayerSpec::relu());
    in = cfg.widths[i];
  }
  const Shape bottleneck = shape;
  const std::size_t flat = shape_volume(bottleneck);
  push(nn::LayerSpec::linear(flat, cfg.latent));
  shape = bottleneck;
  push(nn::LayerSpec::linear(flat, cfg.latent));
  push(nn::LayerSpec::linear(cfg.latent, flat));
  shape = bottleneck;
  for (std::size_t i = cfg.widths.size(); i-- > 0;) {
    const std::size_t out = i == 0 ? cfg.channels : cfg.widths[i - 1];
    push(nn::LayerSpec::conv_transpose(cfg.widths[i], out, kDecoderKernel, kStride, kDecoderPadding));
    if (i > 0) push(nn::LayerSpec::relu());
  }
  return rows;
}

inline std::size_t total_parameters(const VaeConfig& cfg) {
  std::size_t n = 0;
  for (const auto& row : architecture(cfg)) n += row.parameters;
  return n;
}

// 237776419 -> "237,776,419"
inline std::string group_thousands(std::size_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

// Tab-separated table; output shapes as [-1, C, H, W] with -1 for the batch.
inline std::string architecture_summary(const VaeConfig& cfg) {
  std::ostringstream os;
  os << "Layer (type)\tOutput Shape\tParam #\n";
  for (const auto& row : architecture(cfg)) {
    os << row.name << "\t[-1";
    for (std::size_t d : row.output) os << ", " << d;
    os << "]\t" << group_thousands(row.parameters) << '\n';
  }
  os << "Total params:\t" << group_thousands(total_parameters(cfg)) << '\n';
  return os.str();
}

template <typename T>
struct EncoderOutput {
  std::vector<T> mu;
  std::vector<T> logvar;  // 2 log(sigma)
};

template <typename T>
struct LatentSample {
  std::vector<T> eps;
  std::vector<T> z;
};

struct LossBreakdown {
  double total = 0.0;
  double recon_term = 0.0;
  double kl_term = 0.0;
};

struct AnomalyFlag {
  int value = 1;  // +1 no anomaly, -1 anomaly
  double score = 0.0;
};

// z = mu + exp(logvar / 2) * eps
template <typename T>
LatentSample<T> reparameterize(const EncoderOutput<T>& enc, std::vector<T> eps) {
  if (eps.size() != enc.mu.size() || enc.logvar.size() != enc.mu.size()) {
    throw DimensionError("reparameterize: noise length " + std::to_string(eps.size()) +
                         " != latent dim " + std::to_string(enc.mu.size()));
  }
  LatentSample<T> out{std::move(eps), std::vector<T>(enc.mu.size())};
  for (std::size_t d = 0; d < enc.mu.size(); ++d) {
    out.z[d] = enc.mu[d] + std::exp(enc.logvar[d] / T{2}) * out.eps[d];
  }
  return out;
}

// Closed-form KL(N(mu, sigma^2) || N(0, 1)).
template <typename T>
double kl_divergence(const EncoderOutput<T>& enc) {
  if (enc.logvar.size() != enc.mu.size()) throw DimensionError("kl_divergence: mu/logvar length mismatch");
  double kl = 0.0;
  for (std::size_t d = 0; d < enc.mu.size(); ++d) {
    const double m = enc.mu[d], lv = enc.logvar[d];
    if (!std::isfinite(m) || !std::isfinite(lv)) {
      throw NumericError("kl_divergence: non-finite posterior parameter at index " + std::to_string(d));
    }
    kl += m * m + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * kl;
}

// Sum-of-squares reconstruction term (unit-variance Gaussian NLL up to a
// constant) plus KL.
template <typename T>
LossBreakdown elbo_loss(const Tensor<T>& x, const Tensor<T>& recon, const EncoderOutput<T>& enc) {
  if (x.shape() != recon.shape()) {
    throw DimensionError("elbo_loss: input " + shape_string(x.shape()) + " vs reconstruction " +
                         shape_string(recon.shape()));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - static_cast<double>(x[i]);
    sq += d * d;
  }
  LossBreakdown out;
  out.recon_term = 0.5 * sq;
  out.kl_term = kl_divergence(enc);
  out.total = out.recon_term + out.kl_term;
  return out;
}

// Mean squared error on the 0-255 pixel scale for [0,1] inputs.
template <typename T>
double mse_255(const Tensor<T>& x, const Tensor<T>& recon) {
  if (x.shape() != recon.shape()) throw DimensionError("mse: shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = 255.0 * (static_cast<double>(recon[i]) - static_cast<double>(x[i]));
    sq += d * d;
  }
  return sq / static_cast<double>(x.size());
}

// Score < threshold is normal (+1); ties resolve to anomaly.
inline AnomalyFlag anomaly_flag(double score, double threshold) {
  if (!(threshold > 0.0)) throw ArgumentError("anomaly threshold must be positive");
  return {score < threshold ? 1 : -1, score};
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic child seed for (parent, index) pairs.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) ^ (index * 0xd1342543de82ef95ULL + 1));
}

template <typename T>
std::vector<T> standard_normal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> out(n);
  for (T& v : out) v = static_cast<T>(dist(rng));
  return out;
}

enum class Init { uniform, zeros };

template <typename T>
class VaeModel {
 public:
  explicit VaeModel(VaeConfig cfg) : config_(std::move(cfg)) {
    const auto rows = architecture(config_);
    std::size_t r = 0;
    std::size_t conv = 0, deconv = 0;
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
      encoder_.add(rows[r++].spec, params_, "encoder.conv" + std::to_string(++conv));
      if (i + 1 < config_.widths.size()) encoder_.add(rows[r++].spec, params_, "");
    }
    mu_head_.add(rows[r++].spec, params_, "fc_mu");
    logvar_head_.add(rows[r++].spec, params_, "fc_logvar");
    expand_.add(rows[r++].spec, params_, "fc_decode");
    for (; r < rows.size(); ++r) {
      const auto& spec = rows[r].spec;
      decoder_.add(spec, params_,
                   spec.kind == nn::LayerKind::relu ? "" : "decoder.deconv" + std::to_string(++deconv));
    }
  }

  static VaeModel build(const VaeConfig& cfg, std::uint64_t seed, Init init = Init::uniform) {
    VaeModel model(cfg);
    if (init == Init::uniform) {
      std::mt19937_64 rng(seed);
      for (const auto* net : model.chains()) nn::init_uniform(*net, model.params_, rng);
    }
    return model;
  }

  const VaeConfig& config() const noexcept { return config_; }
  nn::ParamStore<T>& params() noexcept { return params_; }
  const nn::ParamStore<T>& params() const noexcept { return params_; }
  std::size_t latent_dim() const noexcept { return config_.latent; }

  const nn::Sequential<T>& encoder() const noexcept { return encoder_; }
  const nn::Sequential<T>& mu_head() const noexcept { return mu_head_; }
  const nn::Sequential<T>& logvar_head() const noexcept { return logvar_head_; }
  const nn::Sequential<T>& expand() const noexcept { return expand_; }
  const nn::Sequential<T>& decoder() const noexcept { return decoder_; }

  EncoderOutput<T> encode(const Tensor<T>& x) const {
    check_input(x);
    const Tensor<T> h = encoder_.forward(params_, x);
    return {mu_head_.forward(params_, h).to_vector(), logvar_head_.forward(params_, h).to_vector()};
  }

  Tensor<T> decode(const std::vector<T>& z) const {
    if (z.size() != config_.latent) {
      throw DimensionError("decode: latent length " + std::to_string(z.size()) + " != " +
                           std::to_string(config_.latent));
    }
    Tensor<T> d = expand_.forward(params_, Tensor<T>({z.size()}, z));
    d.reshape(config_.bottleneck_shape());
    return decoder_.forward(params_, std::move(d));
  }

  // Loss of one frame for a fixed noise draw, no gradient bookkeeping.
  LossBreakdown evaluate_loss(const Tensor<T>& x, const std::vector<T>& eps) const {
    const EncoderOutput<T> enc = encode(x);
    const LatentSample<T> sample = reparameterize(enc, eps);
    return elbo_loss(x, decode(sample.z), enc);
  }

  // Loss of one frame and its exact gradient, accumulated into `grads`.
  LossBreakdown forward_backward(const Tensor<T>& x, const std::vector<T>& eps,
                                 nn::ParamStore<T>& grads) const {
    check_input(x);
    nn::Trace<T> enc_trace, mu_trace, lv_trace, expand_trace, dec_trace;
    const Tensor<T> h = encoder_.forward(params_, x, &enc_trace);
    EncoderOutput<T> enc{mu_head_.forward(params_, h, &mu_trace).to_vector(),
                         logvar_head_.forward(params_, h, &lv_trace).to_vector()};
    const LatentSample<T> sample = reparameterize(enc, eps);
    Tensor<T> d = expand_.forward(params_, Tensor<T>({sample.z.size()}, sample.z), &expand_trace);
    d.reshape(config_.bottleneck_shape());
    const Tensor<T> recon = decoder_.forward(params_, std::move(d), &dec_trace);
    const LossBreakdown loss = elbo_loss(x, recon, enc);

    Tensor<T> grad_recon(recon.shape());
    for (std::size_t i = 0; i < recon.size(); ++i) grad_recon[i] = recon[i] - x[i];
    Tensor<T> gd = decoder_.backward(params_, dec_trace, std::move(grad_recon), grads);
    gd.reshape({gd.size()});
    const Tensor<T> gz = expand_.backward(params_, expand_trace, std::move(gd), grads);

    const std::size_t n = config_.latent;
    Tensor<T> gmu({n}), glv({n});
    for (std::size_t i = 0; i < n; ++i) {
      const T sigma = std::exp(enc.logvar[i] / T{2});
      gmu[i] = gz[i] + enc.mu[i];
      glv[i] = gz[i] * eps[i] * sigma / T{2} + (std::exp(enc.logvar[i]) - T{1}) / T{2};
    }
    Tensor<T> gh = mu_head_.backward(params_, mu_trace, std::move(gmu), grads);
    const Tensor<T> gh2 = logvar_head_.backward(params_, lv_trace, std::move(glv), grads);
    for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += gh2[i];
    encoder_.backward(params_, enc_trace, std::move(gh), grads);
    return loss;
  }

  template <typename U>
  VaeModel<U> cast() const {
    VaeModel<U> out(config_);
    for (std::size_t p = 0; p < params_.size(); ++p) out.params()[p] = params_[p].template cast<U>();
    return out;
  }

 private:
  std::array<const nn::Sequential<T>*, 5> chains() const {
    return {&encoder_, &mu_head_, &logvar_head_, &expand_, &decoder_};
  }

  void check_input(const Tensor<T>& x) const {
    if (x.shape() != config_.input_shape()) {
      throw DimensionError("VAE input " + shape_string(x.shape()) + " does not match configured " +
                           shape_string(config_.input_shape()));
    }
  }

  VaeConfig config_;
  nn::ParamStore<T> params_;
  nn::Sequential<T> encoder_, mu_head_, logvar_head_, expand_, decoder_;
};

// Mean MSE (0-255 scale) over `samples` reparameterized decodes.
template <typename T>
double reconstruction_score(const VaeModel<T>& model, const EncoderOutput<T>& enc, const Tensor<T>& x,
                            std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ArgumentError("reconstruction_score: sample count must be at least 1");
  std::mt19937_64 rng(seed);
  double sum = 0.0;
  for (std::size_t l = 0; l < samples; ++l) {
    const LatentSample<T> s = reparameterize(enc, standard_normal<T>(model.latent_dim(), rng));
    sum += mse_255(x, model.decode(s.z));
  }
  return sum / static_cast<double>(samples);
}

template <typename T>
double reconstruction_score(const VaeModel<T>& model, const Tensor<T>& x, std::size_t samples,
                            std::uint64_t seed) {
  if (samples == 0) throw ArgumentError("reconstruction_score: sample count must be at least 1");
  return reconstruction_score(model, model.encode(x), x, samples, seed);
}

template <typename T>
void accumulate(nn::ParamStore<T>& into, const nn::ParamStore<T>& from) {
  for (std::size_t p = 0; p < into.size(); ++p) {
    auto dst = into[p].values();
    auto src = from[p].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 16;
  double learning_rate = 1e-3;
  std::size_t threads = 1;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown mean;
};

// `epoch  total  recon  kl`, tab separated.
inline std::string format_epoch_log(const EpochLog& e) {
  std::ostringstream os;
  os.precision(9);
  os << e.epoch << '\t' << e.mean.total << '\t' << e.mean.recon_term << '\t' << e.mean.kl_term;
  return os.str();
}

template <typename T>
struct TrainResult {
  VaeModel<T> model;
  std::vector<EpochLog> log;
};

// Mini-batch Adam on the summed-pixel ELBO. Per-sample gradients are reduced
// in sample order, so results do not depend on `threads`.
template <typename T>
TrainResult<T> train_vae(const std::vector<Tensor<T>>& frames, const VaeConfig& config,
                         const TrainConfig& hyper, std::uint64_t seed,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (frames.empty()) throw DataError("train_vae: empty training set");
  if (hyper.batch == 0 || hyper.epochs == 0) throw ArgumentError("train_vae: batch and epochs must be positive");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].shape() != config.input_shape()) {
      throw DataError("train_vae: frame " + std::to_string(i) + " has shape " +
                      shape_string(frames[i].shape()) + ", expected " +
                      shape_string(config.input_shape()));
    }
  }
  TrainResult<T> result{VaeModel<T>::build(config, seed), {}};
  VaeModel<T>& model = result.model;
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = hyper.learning_rate;
  nn::AdamState<T> adam(model.params(), adam_cfg);
  std::mt19937_64 rng(derive_seed(seed, 1));

  const std::size_t workers = std::max<std::size_t>(1, hyper.threads);
  std::vector<nn::ParamStore<T>> sample_grads(std::min(workers, hyper.batch) > 1 ? hyper.batch : 1,
                                              model.params().zeros_like());
  nn::ParamStore<T> grads = model.params().zeros_like();
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    LossBreakdown sum;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch, ++batch_index) {
      const std::size_t count = std::min(hyper.batch, order.size() - start);
      std::vector<std::vector<T>> noise(count);
      for (auto& eps : noise) eps = standard_normal<T>(config.latent, rng);
      std::vector<LossBreakdown> losses(count);
      grads.set_zero();

      if (sample_grads.size() == 1) {
        for (std::size_t s = 0; s < count; ++s) {
          sample_grads[0].set_zero();
          losses[s] = model.forward_backward(frames[order[start + s]], noise[s], sample_grads[0]);
          accumulate(grads, sample_grads[0]);
        }
      } else {
        std::vector<std::thread> pool;
        const std::size_t n_workers = std::min(workers, count);
        for (std::size_t w = 0; w < n_workers; ++w) {
          pool.emplace_back([&, w] {
            for (std::size_t s = w; s < count; s += n_workers) {
              sample_grads[s].set_zero();
              losses[s] = model.forward_backward(frames[order[start + s]], noise[s], sample_grads[s]);
            }
          });
        }
        for (auto& t : pool) t.join();
        for (std::size_t s = 0; s < count; ++s) accumulate(grads, sample_grads[s]);
      }

      double batch_total = 0.0;
      for (const auto& l : losses) {
        batch_total += l.total;
        sum.total += l.total;
        sum.recon_term += l.recon_term;
        sum.kl_term += l.kl_term;
      }
      if (!std::isfinite(batch_total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      const T scale = T{1} / static_cast<T>(count);
      for (std::size_t p = 0; p < grads.size(); ++p) {
        for (T& g : grads[p].values()) g *= scale;
      }
      try {
        nn::adam_step(model.params(), grads, adam);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      }
    }
    const double n = static_cast<double>(frames.size());
    EpochLog entry{epoch, {sum.total / n, sum.recon_term / n, sum.kl_term / n}};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

}  // namespace sidewalk::vae
