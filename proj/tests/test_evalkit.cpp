#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sidewalk/evalkit.hpp"

using namespace sidewalk;
using namespace sidewalk::evalkit;

namespace {

// Table I (VAE only) and Table II (hybrid).
constexpr ConfusionMatrix kTableI{2428, 226, 141, 1031};
constexpr ConfusionMatrix kTableII{2465, 189, 141, 1031};

// Mann-Whitney form of the empirical AUC, ties count one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

}  // namespace

TEST(Confusion, TableArithmetic) {
  EXPECT_EQ(kTableII.total(), 3826u);
  EXPECT_EQ(kTableI.total(), 3826u);
  EXPECT_DOUBLE_EQ(accuracy(kTableII), 3496.0 / 3826.0);
  EXPECT_DOUBLE_EQ(round_to(100.0 * accuracy(kTableII), 1), 91.4);
  EXPECT_DOUBLE_EQ(accuracy(kTableI), 3459.0 / 3826.0);
  EXPECT_DOUBLE_EQ(round_to(100.0 * accuracy(kTableI), 1), 90.4);
  EXPECT_DOUBLE_EQ(false_hazard_reduction(kTableI, kTableII), 37.0 / 226.0);
  EXPECT_DOUBLE_EQ(round_to(100.0 * false_hazard_reduction(kTableI, kTableII), 1), 16.4);
}

TEST(Confusion, CellsFromPredictions) {
  const std::vector<bool> pred{true, true, false, false, true};
  const std::vector<FrameLabel> labels{FrameLabel::hazard, FrameLabel::anomaly_nonhazard, FrameLabel::hazard,
                                       FrameLabel::normal, FrameLabel::normal};
  const auto cm = confusion_matrix(pred, labels);
  EXPECT_EQ(cm, (ConfusionMatrix{1, 2, 1, 1}));
  EXPECT_THROW(confusion_matrix(std::vector<bool>{true}, std::vector<bool>{}), DimensionError);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(accuracy(ConfusionMatrix{}), ArgumentError);
  EXPECT_THROW(false_hazard_reduction(ConfusionMatrix{5, 0, 0, 5}, kTableII), ArgumentError);
}

TEST(Roc, HandCase) {
  const std::vector<double> s{1, 2, 3, 4};
  const std::vector<bool> pos{false, false, true, true};
  const auto pts = roc_curve(s, pos, {0.0, 2.5, 5.0});
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0].false_positive_rate, 1.0);
  EXPECT_EQ(pts[0].true_positive_rate, 1.0);
  EXPECT_EQ(pts[1].false_positive_rate, 0.0);
  EXPECT_EQ(pts[1].true_positive_rate, 1.0);
  EXPECT_EQ(pts[2].false_positive_rate, 0.0);
  EXPECT_EQ(pts[2].true_positive_rate, 0.0);
  EXPECT_DOUBLE_EQ(auc(pts), 1.0);
}

TEST(Roc, IdenticalScoresGiveChance) {
  const std::vector<double> s(10, 7.0);
  std::vector<bool> pos(10, false);
  for (int i = 0; i < 5; ++i) pos[i] = true;
  EXPECT_DOUBLE_EQ(auc(roc_curve(s, pos, score_thresholds(s))), 0.5);
}

TEST(Roc, ReversedScoresGiveZero) {
  const std::vector<double> s{4, 3, 2, 1};
  const std::vector<bool> pos{true, true, false, false};
  EXPECT_DOUBLE_EQ(auc(roc_curve(s, {false, false, true, true}, score_thresholds(s))), 0.0);
  EXPECT_DOUBLE_EQ(auc(roc_curve(s, pos, score_thresholds(s))), 1.0);
}

TEST(Roc, ThresholdAtScoreCountsAsPositive) {
  const auto pts = roc_curve({2.0, 1.0}, {true, false}, {2.0});
  EXPECT_EQ(pts[0].true_positive_rate, 1.0);
  EXPECT_EQ(pts[0].false_positive_rate, 0.0);
}

TEST(Roc, LabelsBinarizeAnomalyAgainstNormal) {
  const std::vector<FrameLabel> labels{FrameLabel::normal, FrameLabel::anomaly_nonhazard, FrameLabel::hazard};
  const auto pts = roc_curve({1.0, 5.0, 6.0}, labels, {3.0});
  EXPECT_EQ(pts[0].true_positive_rate, 1.0);
  EXPECT_EQ(pts[0].false_positive_rate, 0.0);
}

TEST(Roc, Errors) {
  EXPECT_THROW(roc_curve({1.0, 2.0}, std::vector<bool>{true, true}, {1.0}), EvaluationError);
  EXPECT_THROW(roc_curve({1.0, 2.0}, std::vector<bool>{false, false}, {1.0}), EvaluationError);
  EXPECT_THROW(roc_curve({1.0}, std::vector<bool>{true, false}, {1.0}), DimensionError);
  EXPECT_THROW(roc_curve({1.0, 2.0}, std::vector<bool>{true, false}, {}), ArgumentError);
  EXPECT_THROW(auc({{1.0, 0.0, 0.0}}), ArgumentError);
}

TEST(Roc, LinearThresholds) {
  const auto t = linear_thresholds();
  ASSERT_EQ(t.size(), 50u);
  EXPECT_EQ(t.front(), 10.0);
  EXPECT_EQ(t.back(), 500.0);
  EXPECT_DOUBLE_EQ(t[1] - t[0], 10.0);
  EXPECT_EQ(linear_thresholds(3.0, 9.0, 1), std::vector<double>{3.0});
}

TEST(Roc, EmpiricalAucMatchesPairwiseOracle) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> s(30);
    std::vector<bool> pos(30);
    for (std::size_t i = 0; i < 30; ++i) {
      pos[i] = i % 3 == 0;
      // Coarse scores force ties on even trials.
      s[i] = trial % 2 ? g(rng) + (pos[i] ? 0.8 : 0.0) : static_cast<double>(coarse(rng) + (pos[i] ? 1 : 0));
    }
    EXPECT_NEAR(auc(roc_curve(s, pos, score_thresholds(s))), pairwise_auc(s, pos), 1e-12) << trial;
  }
}

TEST(Format, ConfusionAndRoc) {
  const auto text = format_confusion(kTableII, "hybrid");
  EXPECT_NE(text.find("hybrid\n"), std::string::npos);
  EXPECT_NE(text.find("true hazardous      1031"), std::string::npos);
  EXPECT_NE(text.find("cm,2465,189,141,1031,0.914"), std::string::npos);
  EXPECT_EQ(format_roc_csv({{2.5, 1.0, 0.5}}), "threshold,fpr,tpr\n2.5,0.5,1\n");
}

TEST(Labels, RoundTrip) {
  for (auto l : {FrameLabel::normal, FrameLabel::anomaly_nonhazard, FrameLabel::hazard})
    EXPECT_EQ(parse_label(to_string(l)), l);
  EXPECT_THROW(parse_label("pothole"), FormatError);
  EXPECT_TRUE(is_hazard(FrameLabel::hazard));
  EXPECT_FALSE(is_hazard(FrameLabel::anomaly_nonhazard));
  EXPECT_TRUE(is_anomaly(FrameLabel::anomaly_nonhazard));
  EXPECT_FALSE(is_anomaly(FrameLabel::normal));
}
