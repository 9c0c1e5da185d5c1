#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sidewalk/synth.hpp"
#include "sidewalk/vae.hpp"
#include "support/oracles.hpp"

using namespace sidewalk;
using namespace sidewalk::vae;

namespace {

EncoderOutput<double> enc_of(std::vector<double> mu, std::vector<double> lv) { return {std::move(mu), std::move(lv)}; }

std::vector<Tensor<float>> normal_frames(std::size_t n, std::uint64_t seed = 7) {
  dataio::SynthSpec spec;
  spec.seed = seed;
  std::vector<Tensor<float>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(dataio::render_frame(spec, evalkit::FrameLabel::normal,
                                       dataio::synth_frame_seed(spec, dataio::Split::train,
                                                                evalkit::FrameLabel::normal, i))
                      .image);
  }
  return out;
}

}  // namespace

TEST(Architecture, CanonicalRowsAndTotal) {
  const auto rows = architecture(VaeConfig::canonical());
  std::vector<std::pair<std::string, std::size_t>> with_params;
  for (const auto& r : rows) {
    if (r.parameters) with_params.emplace_back(r.name, r.parameters);
  }
  const std::vector<std::size_t> expected{2432, 51264, 204928, 819456, 78644224, 78644224,
                                          78720000, 524416, 131136, 32800, 1539};
  ASSERT_EQ(with_params.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(with_params[i].second, expected[i]) << with_params[i].first;
  EXPECT_EQ(total_parameters(VaeConfig::canonical()), 237776419u);
  EXPECT_EQ(rows.front().name, "Conv2d-1");
  EXPECT_EQ(rows.back().name, "ConvTranspose2d-17");
}

TEST(Architecture, CanonicalDecoderExpandLayer) {
  const auto model = VaeModel<float>(VaeConfig::canonical());
  EXPECT_EQ(model.params()["fc_decode.weight"].shape(), (Shape{76800, 1024}));
  EXPECT_EQ(model.params()["fc_decode.weight"].size() + model.params()["fc_decode.bias"].size(), 78720000u);
  EXPECT_EQ(model.params().parameter_count(), 237776419u);
}

TEST(Architecture, DeskFlattenLength) {
  EXPECT_EQ(VaeConfig::desk().flatten_length(), 64u * 4 * 4);
  EXPECT_EQ(VaeConfig::desk().bottleneck_shape(), (Shape{64, 4, 4}));
}

TEST(Architecture, RejectsDimsNotDivisibleBy16) {
  VaeConfig cfg = VaeConfig::desk();
  cfg.height = 72;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(VaeModel<float>::build(cfg, 1), ConfigError);
  EXPECT_THROW(VaeConfig::from_preset("huge"), ConfigError);
}

TEST(Encode, LengthsAndDeterminism) {
  const auto model = VaeModel<float>::build(VaeConfig::desk(), 3);
  const auto x = normal_frames(1)[0];
  const auto a = model.encode(x), b = model.encode(x);
  EXPECT_EQ(a.mu.size(), 64u);
  EXPECT_EQ(a.logvar.size(), 64u);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.logvar, b.logvar);
  EXPECT_THROW(model.encode(Tensor<float>({3, 32, 32})), DimensionError);
}

TEST(Encode, ZeroNetworkZeroImage) {
  const auto model = VaeModel<double>::build(VaeConfig::desk(), 0, Init::zeros);
  const auto e = model.encode(Tensor<double>({3, 64, 64}));
  for (double v : e.mu) EXPECT_EQ(v, 0.0);
  for (double v : e.logvar) EXPECT_EQ(v, 0.0);
}

TEST(Reparameterize, Cases) {
  const auto enc = enc_of({1.0, -2.0}, {0.7, -0.3});
  EXPECT_EQ(reparameterize(enc, {0.0, 0.0}).z, enc.mu);
  const auto unit = enc_of({1.0, -2.0}, {0.0, 0.0});
  const auto s = reparameterize(unit, {0.5, 0.25});
  EXPECT_DOUBLE_EQ(s.z[0], 1.5);
  EXPECT_DOUBLE_EQ(s.z[1], -1.75);
  EXPECT_THROW(reparameterize(unit, {1.0}), DimensionError);
}

TEST(Reparameterize, MonteCarloMoments) {
  const auto enc = enc_of({0.8, -1.5, 3.0}, {std::log(0.25), 0.0, std::log(2.0)});
  std::mt19937_64 rng(17);
  const std::size_t n = 10000;
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = reparameterize(enc, standard_normal<double>(3, rng));
    for (int d = 0; d < 3; ++d) {
      sum[d] += s.z[d];
      sq[d] += s.z[d] * s.z[d];
    }
  }
  for (int d = 0; d < 3; ++d) {
    const double mean = sum[d] / n, var = sq[d] / n - mean * mean;
    EXPECT_NEAR(mean, enc.mu[d], 0.05 * std::abs(enc.mu[d]));
    const double sigma2 = std::exp(enc.logvar[d]);
    EXPECT_NEAR(var, sigma2, 0.05 * sigma2);
  }
}

TEST(Decode, ShapesZeroAndDeterminism) {
  const auto zero = VaeModel<double>::build(VaeConfig::desk(), 0, Init::zeros);
  const auto out = zero.decode(std::vector<double>(64, 0.0));
  EXPECT_EQ(out.shape(), (Shape{3, 64, 64}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
  const auto model = VaeModel<float>::build(VaeConfig::desk(), 5);
  std::vector<float> z(64, 0.3f);
  EXPECT_EQ(model.decode(z), model.decode(z));
  EXPECT_THROW(model.decode(std::vector<float>(63)), DimensionError);
}

TEST(Decode, CanonicalOutputShape) {
  const auto model = VaeModel<float>::build(VaeConfig::canonical(), 0, Init::zeros);
  EXPECT_EQ(model.decode(std::vector<float>(1024, 0.0f)).shape(), (Shape{3, 240, 320}));
}

TEST(KlDivergence, Cases) {
  EXPECT_EQ(kl_divergence(enc_of({0, 0, 0}, {0, 0, 0})), 0.0);
  EXPECT_DOUBLE_EQ(kl_divergence(enc_of(std::vector<double>(7, 1.0), std::vector<double>(7, 0.0))), 3.5);
  EXPECT_THROW(kl_divergence(enc_of({std::nan("")}, {0})), NumericError);
  EXPECT_THROW(kl_divergence(enc_of({0}, {INFINITY})), NumericError);
}

TEST(KlDivergence, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> mu(5), lv(5);
    for (auto& v : mu) v = u(rng);
    for (auto& v : lv) v = u(rng);
    EXPECT_GE(kl_divergence(enc_of(mu, lv)), 0.0);
  }
}

// E_q[log q(z) - log p(z)] with z ~ q, estimated from 1e5 draws.
TEST(KlDivergence, MatchesMonteCarlo) {
  const auto enc = enc_of({0.5, -1.0, 1.5, 0.0}, {-0.5, 0.3, -1.0, 0.8});
  std::mt19937_64 rng(99);
  const std::size_t n = 100000;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto eps = standard_normal<double>(4, rng);
    double lq = 0.0, lp = 0.0;
    for (int d = 0; d < 4; ++d) {
      const double sigma = std::exp(enc.logvar[d] / 2), z = enc.mu[d] + sigma * eps[d];
      lq += -0.5 * eps[d] * eps[d] - std::log(sigma);
      lp += -0.5 * z * z;
    }
    acc += lq - lp;
  }
  const double mc = acc / n, exact = kl_divergence(enc);
  EXPECT_NEAR(mc, exact, 0.01 * exact);
}

TEST(ElboLoss, Cases) {
  Tensor<double> x({3, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(i);
  const auto zero_enc = enc_of({0, 0}, {0, 0});
  EXPECT_EQ(elbo_loss(x, x, zero_enc).total, 0.0);
  Tensor<double> shifted = x;
  for (double& v : shifted.values()) v += 0.1;
  const auto loss = elbo_loss(x, shifted, zero_enc);
  EXPECT_NEAR(loss.total, 0.5 * 48 * 0.01, 1e-12);
  EXPECT_DOUBLE_EQ(loss.total, loss.recon_term + loss.kl_term);
  EXPECT_THROW(elbo_loss(x, Tensor<double>({3, 4, 5}), zero_enc), DimensionError);
}

// A random sample of desk parameters from every tensor; the acceptance
// harness checks all of them.
TEST(ElboLoss, GradientMatchesFiniteDifferencesOnDeskSample) {
  auto model = VaeModel<double>::build(VaeConfig::desk(), 13);
  std::mt19937_64 rng(31);
  const auto x = oracle::random_tensor<double>({3, 64, 64}, rng, 0.0, 1.0);
  const auto eps = standard_normal<double>(64, rng);
  auto grads = model.params().zeros_like();
  const auto loss = model.forward_backward(x, eps, grads);
  oracle::VaeFiniteDifference fd(model, x, eps);
  EXPECT_NEAR(fd.base_loss(), loss.total, 1e-9 * loss.total);
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    std::uniform_int_distribution<std::size_t> pick(0, model.params()[p].size() - 1);
    for (int k = 0; k < 12; ++k) {
      const std::size_t i = pick(rng);
      const double d = fd.derivative(p, i, 1e-5);
      EXPECT_TRUE(oracle::close_relative(grads[p][i], d, 1e-4, 1e-6))
          << model.params().name(p) << "[" << i << "]: backward " << grads[p][i] << " vs fd " << d;
    }
  }
}

TEST(TrainVae, LossHalvesOverTwentyEpochs) {
  const auto frames = normal_frames(200);
  TrainConfig hyper;
  hyper.epochs = 20;
  const auto result = train_vae(frames, VaeConfig::desk(), hyper, 2);
  ASSERT_EQ(result.log.size(), 20u);
  EXPECT_LT(result.log.back().mean.total, 0.5 * result.log.front().mean.total);
  for (const auto& e : result.log) EXPECT_GE(e.mean.kl_term, 0.0);
}

TEST(TrainVae, OverfitsSingleFrame) {
  const auto frame = normal_frames(1)[0];
  TrainConfig hyper;
  hyper.epochs = 200;
  hyper.batch = 1;
  // Adam moves each weight about lr per step; at 1e-3 the output bias alone
  // needs ~500 steps to reach the frame's gray level.
  hyper.learning_rate = 3e-3;
  const auto result = train_vae(std::vector<Tensor<float>>{frame}, VaeConfig::desk(), hyper, 4);
  const auto enc = result.model.encode(frame);
  EXPECT_LT(mse_255(frame, result.model.decode(enc.mu)) / (255.0 * 255.0), 1e-2);
  EXPECT_LT(reconstruction_score(result.model, frame, 10, 1) / (255.0 * 255.0), 1e-2);
}

TEST(TrainVae, SameSeedSameLog) {
  const auto frames = normal_frames(40);
  TrainConfig hyper;
  hyper.epochs = 3;
  hyper.batch = 8;
  const auto a = train_vae(frames, VaeConfig::desk(), hyper, 5);
  const auto b = train_vae(frames, VaeConfig::desk(), hyper, 5);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(format_epoch_log(a.log[i]), format_epoch_log(b.log[i]));
  for (std::size_t p = 0; p < a.model.params().size(); ++p) EXPECT_EQ(a.model.params()[p], b.model.params()[p]);
}

TEST(TrainVae, ThreadCountDoesNotChangeResult) {
  const auto frames = normal_frames(24);
  TrainConfig hyper;
  hyper.epochs = 2;
  hyper.batch = 8;
  const auto a = train_vae(frames, VaeConfig::desk(), hyper, 6);
  hyper.threads = 3;
  const auto b = train_vae(frames, VaeConfig::desk(), hyper, 6);
  for (std::size_t p = 0; p < a.model.params().size(); ++p) EXPECT_EQ(a.model.params()[p], b.model.params()[p]);
}

TEST(TrainVae, Errors) {
  EXPECT_THROW(train_vae(std::vector<Tensor<float>>{}, VaeConfig::desk(), TrainConfig{}, 1), DataError);
  auto bad = normal_frames(2);
  bad[1][5] = std::nanf("");
  TrainConfig hyper;
  hyper.epochs = 1;
  try {
    train_vae(bad, VaeConfig::desk(), hyper, 1);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}

TEST(TrainVae, EpochLogFormat) {
  EXPECT_EQ(format_epoch_log({3, {1.5, 1.25, 0.25}}), "3\t1.5\t1.25\t0.25");
}

TEST(ReconstructionScore, AnalyticCases) {
  const auto zero = VaeModel<double>::build(VaeConfig::desk(), 0, Init::zeros);
  const Tensor<double> black({3, 64, 64});
  EXPECT_EQ(reconstruction_score(zero, black, 10, 1), 0.0);
  Tensor<double> gray({3, 64, 64}, 10.0 / 255.0);
  EXPECT_NEAR(reconstruction_score(zero, gray, 10, 1), 100.0, 1e-9);
  EXPECT_THROW(reconstruction_score(zero, gray, 0, 1), ArgumentError);
}

TEST(ReconstructionScore, DeterministicLatentIgnoresSampleCount) {
  auto model = VaeModel<double>::build(VaeConfig::desk(), 8);
  for (double& v : model.params()["fc_logvar.weight"].values()) v = 0.0;
  for (double& v : model.params()["fc_logvar.bias"].values()) v = -1000.0;
  const auto x = normal_frames(1)[0].cast<double>();
  const double s1 = reconstruction_score(model, x, 1, 3);
  EXPECT_NEAR(reconstruction_score(model, x, 10, 4), s1, 1e-12 * s1);
  EXPECT_NEAR(reconstruction_score(model, x, 100, 5), s1, 1e-12 * s1);
}

TEST(ReconstructionScore, StandardErrorShrinksWithSamples) {
  auto model = VaeModel<float>::build(VaeConfig::desk(), 8);
  for (float& v : model.params()["fc_logvar.bias"].values()) v = 1.0f;
  const auto x = normal_frames(1)[0];
  auto spread = [&](std::size_t L) {
    std::vector<double> s;
    for (std::uint64_t seed = 0; seed < 30; ++seed) s.push_back(reconstruction_score(model, x, L, 100 + seed));
    const double m = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
    double v = 0.0;
    for (double e : s) v += (e - m) * (e - m);
    return std::sqrt(v / (s.size() - 1));
  };
  const double e1 = spread(1), e10 = spread(10), e100 = spread(100);
  EXPECT_GT(e1, e10);
  EXPECT_GT(e10, e100);
}

TEST(ReconstructionScore, HazardsScoreAboveNormals) {
  dataio::SynthSpec spec;
  TrainConfig hyper;
  hyper.epochs = 8;
  const auto model = train_vae(normal_frames(200), VaeConfig::desk(), hyper, 3).model;
  auto median_score = [&](evalkit::FrameLabel label) {
    std::vector<double> s;
    for (std::size_t i = 0; i < 30; ++i) {
      const auto f = dataio::render_frame(spec, label, dataio::synth_frame_seed(spec, dataio::Split::test, label, i));
      s.push_back(reconstruction_score(model, f.image, 10, i));
    }
    std::nth_element(s.begin(), s.begin() + 15, s.end());
    return s[15];
  };
  EXPECT_GT(median_score(evalkit::FrameLabel::hazard), median_score(evalkit::FrameLabel::normal));
}

TEST(AnomalyFlag, Cases) {
  EXPECT_EQ(anomaly_flag(5, 10).value, 1);
  EXPECT_EQ(anomaly_flag(10, 10).value, -1);
  EXPECT_EQ(anomaly_flag(600, 500).value, -1);
  EXPECT_EQ(anomaly_flag(600, 500).score, 600);
  EXPECT_THROW(anomaly_flag(1, 0), ArgumentError);
}

TEST(Architecture, SummaryText) {
  EXPECT_EQ(group_thousands(0), "0");
  EXPECT_EQ(group_thousands(999), "999");
  EXPECT_EQ(group_thousands(1539), "1,539");
  EXPECT_EQ(group_thousands(78644224), "78,644,224");
  const auto text = architecture_summary(VaeConfig::canonical());
  EXPECT_EQ(text.rfind("Layer (type)\tOutput Shape\tParam #\n", 0), 0u);
  EXPECT_NE(text.find("Conv2d-1\t[-1, 32, 120, 160]\t2,432\n"), std::string::npos);
  EXPECT_NE(text.find("ReLU-2\t[-1, 32, 120, 160]\t0\n"), std::string::npos);
  EXPECT_NE(text.find("Linear-10\t[-1, 76800]\t78,720,000\n"), std::string::npos);
  EXPECT_NE(text.find("ConvTranspose2d-17\t[-1, 3, 240, 320]\t1,539\n"), std::string::npos);
  EXPECT_NE(text.find("Total params:\t237,776,419\n"), std::string::npos);
}
