#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "robustft/calibration.hpp"
#include "robustft/errors.hpp"
#include "robustft/schedule.hpp"

using namespace robustft;

namespace {

// Classifies by mean pixel value; correct iff mean < 0.5 (every label is 0).
class MeanThreshold final : public Classifier {
 public:
  std::vector<int> predict(std::span<const Image> images) const override {
    std::vector<int> out;
    for (const auto& img : images) {
      const double m = std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / static_cast<double>(img.size());
      out.push_back(m < 0.5 ? 0 : 1);
    }
    return out;
  }
};

class Constant final : public Classifier {
 public:
  explicit Constant(int label) : label_(label) {}
  std::vector<int> predict(std::span<const Image> images) const override {
    return std::vector<int>(images.size(), label_);
  }

 private:
  int label_;
};

// Constant-gray images spread evenly over [0, 0.5): brightening by delta moves
// a fraction 2 * delta of them past the threshold, so the drop is 2 * delta.
LabeledDataset ramp(std::size_t n) {
  LabeledDataset ds;
  ds.class_count = 2;
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.emplace_back(2, 2, 3, 0.5 * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    ds.labels.push_back(0);
  }
  return ds;
}

}  // namespace

TEST(Schedule, CombinedAlternatesStrictlyByEpoch) {
  const auto cfg = StrategyConfig::combined(PresetTable::builtin(), "cifar10");
  cfg.validate();
  for (int e = 0; e < 30; ++e) {
    EXPECT_EQ(select_set(cfg, e).name, e % 2 == 0 ? SetName::CombinedPlus : SetName::CombinedMinus) << e;
  }
  for (int start = 0; start < 20; ++start) {
    int plus = 0;
    for (int e = start; e < start + 10; ++e) plus += select_set(cfg, e).name == SetName::CombinedPlus;
    EXPECT_EQ(plus, 5);
  }
}

TEST(Schedule, PerBatchAlternationIsOptIn) {
  auto cfg = StrategyConfig::combined(PresetTable::builtin(), "cifar10");
  EXPECT_EQ(select_set(cfg, 0, 1).name, SetName::CombinedPlus);
  cfg.alternation = Alternation::PerBatch;
  EXPECT_EQ(select_set(cfg, 0, 1).name, SetName::CombinedMinus);
}

TEST(Schedule, IndividualAlwaysUsesItsSpec) {
  const auto& gn = PresetTable::builtin().get("cifar10", AugmentKind::GaussianNoise);
  const auto cfg = StrategyConfig::individual(gn);
  for (int e = 0; e < 5; ++e) {
    const auto& s = select_set(cfg, e);
    ASSERT_EQ(s.specs.size(), 1u);
    EXPECT_EQ(s.specs[0], gn);
  }
}

TEST(Schedule, ValidationRejectsWrongMembership) {
  auto cfg = StrategyConfig::combined(PresetTable::builtin(), "cifar10");
  std::swap(cfg.combined_plus.specs[0], cfg.combined_minus.specs[0]);
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(Schedule, PairsAreReproducibleAndKeepCleanIntact) {
  Image img(4, 4, 3, 0.4);
  img.at(1, 2, 0) = 0.9;
  const Image before = img;
  const auto set = combined_plus(PresetTable::builtin(), "cifar10");
  const auto [c1, a1] = make_pair(img, set, RandomStream(3));
  const auto [c2, a2] = make_pair(img, set, RandomStream(3));
  EXPECT_TRUE(bitwise_equal(img, before));
  EXPECT_TRUE(bitwise_equal(c1, img));
  EXPECT_TRUE(bitwise_equal(a1, a2));

  AugmentationSet identity;
  identity.specs = {{.kind = AugmentKind::GaussianNoise, .sigma = 0.0}, {.kind = AugmentKind::AdditiveSAP, .p = 0.0}};
  const auto [c3, a3] = make_pair(img, identity, RandomStream(3));
  EXPECT_TRUE(bitwise_equal(c3, a3));
}

TEST(Schedule, PairAlignmentSurvivesShuffling) {
  LabeledDataset ds;
  for (std::size_t i = 0; i < 50; ++i) {
    ds.images.emplace_back(2, 2, 3, static_cast<double>(i) / 50.0);
    ds.labels.push_back(static_cast<int>(i % 10));
  }
  const auto set = combined_minus(PresetTable::builtin(), "cifar10");
  const std::uint64_t seed = 17;
  RandomStream shuffle(5);
  const auto order = permutation(ds.size(), shuffle);
  // Track each source index through the permutation: pair k of the shuffled
  // batch must be built from, and only from, image order[k].
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t src = order[k];
    const auto [clean, aug] = make_pair(ds.images[src], set, pair_stream(seed, 3, src));
    EXPECT_TRUE(bitwise_equal(clean, ds.images[src]));
    const Image expect = compose(ds.images[src], set, pair_stream(seed, 3, src));
    EXPECT_TRUE(bitwise_equal(aug, expect));
  }
}

TEST(Schedule, AtExtendDoublesAndKeepsLabels) {
  LabeledDataset ds;
  for (std::size_t i = 0; i < 100; ++i) {
    ds.images.emplace_back(2, 2, 3, 0.5);
    ds.labels.push_back(static_cast<int>(i % 10));
  }
  const auto set = combined_plus(PresetTable::builtin(), "cifar10");
  const auto ext = at_extend(ds, set, RandomStream(1));
  ASSERT_EQ(ext.size(), 200u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(ext.labels[100 + i], ds.labels[i]);
    EXPECT_TRUE(bitwise_equal(ext.images[i], ds.images[i]));
  }
  const std::vector<AugmentationSet> two{set, combined_minus(PresetTable::builtin(), "cifar10")};
  EXPECT_EQ(at_extend(ds, two, RandomStream(1)).size(), 300u);
}

TEST(EvalAccuracy, TrivialClassifiers) {
  LabeledDataset ds;
  for (int i = 0; i < 100; ++i) {
    ds.images.emplace_back(2, 2, 3, 0.1);
    ds.labels.push_back(i % 10);
  }
  EXPECT_EQ(eval_accuracy(Constant(3), ds, std::nullopt), 0.1);
  LabeledDataset zeros = ramp(40);
  EXPECT_EQ(eval_accuracy(MeanThreshold(), zeros, std::nullopt), 1.0);
  const AugmentationSpec id{.kind = AugmentKind::GaussianNoise, .sigma = 0.0};
  EXPECT_EQ(eval_accuracy(MeanThreshold(), zeros, id), eval_accuracy(MeanThreshold(), zeros, std::nullopt));
  EXPECT_THROW(eval_accuracy(Constant(0), LabeledDataset{}, std::nullopt), ContractError);
}

TEST(Calibrate, BrightnessRecoversAnalyticRoot) {
  const auto ds = ramp(1000);
  const auto task = CalibrationTask::for_kind(AugmentKind::BrightnessPlus);
  const auto r = calibrate(MeanThreshold(), ds, task);
  EXPECT_FALSE(r.saturated);
  EXPECT_LE(std::abs(r.drop - 0.10), task.tolerance);
  EXPECT_NEAR(r.knob_value, 0.05, task.tolerance / 2 + 1e-3);
  EXPECT_LE(r.iterations, 30);
  EXPECT_EQ(r.spec.kind, AugmentKind::BrightnessPlus);
  // Determinism.
  const auto again = calibrate(MeanThreshold(), ds, task);
  EXPECT_EQ(again.knob_value, r.knob_value);
  EXPECT_EQ(again.trace, r.trace);
}

TEST(Calibrate, ZeroTargetReturnsWeakEnd) {
  auto task = CalibrationTask::for_kind(AugmentKind::BrightnessPlus);
  task.target_drop = 0.0;
  const auto r = calibrate(MeanThreshold(), ramp(100), task);
  EXPECT_EQ(r.knob_value, 0.0);
  EXPECT_TRUE(r.spec.is_identity());
}

TEST(Calibrate, UnreachableTargetIsFlaggedAsSaturated) {
  // Brightness- only darkens, which never crosses the threshold.
  const auto task = CalibrationTask::for_kind(AugmentKind::BrightnessMinus);
  const auto r = calibrate(MeanThreshold(), ramp(100), task);
  EXPECT_TRUE(r.saturated);
  EXPECT_EQ(r.knob_value, -1.0);
  EXPECT_LT(r.drop, 0.1);
}

TEST(Calibrate, NonMonotoneResponseIsRejected) {
  // Wrong inside a middle band and near white: drop is 0 at delta 0, 0.7 at
  // delta 0.96 but 1.0 at the first midpoint 0.48.
  class Band final : public Classifier {
   public:
    std::vector<int> predict(std::span<const Image> images) const override {
      std::vector<int> out;
      for (const auto& img : images) {
        const double v = img.pixels[0];
        out.push_back((v > 0.45 && v < 0.6) || v > 0.985 ? 1 : 0);
      }
      return out;
    }
  };
  LabeledDataset ds;
  ds.class_count = 2;
  for (int i = 0; i < 10; ++i) {
    ds.images.emplace_back(1, 1, 3, 0.01 * i);
    ds.labels.push_back(0);
  }
  auto task = CalibrationTask::for_kind(AugmentKind::BrightnessPlus);
  task.hi = 0.96;
  task.target_drop = 0.5;
  try {
    calibrate(Band(), ds, task);
    FAIL();
  } catch (const CalibrationError& e) {
    EXPECT_NE(std::string(e.what()).find("non-monotone"), std::string::npos);
  }
}

TEST(Calibrate, ExhaustedIterationsAreReported) {
  // A step response never lands inside the tolerance band.
  class Step final : public Classifier {
   public:
    std::vector<int> predict(std::span<const Image> images) const override {
      std::vector<int> out;
      for (const auto& img : images) out.push_back(img.pixels[0] > 0.3 ? 1 : 0);
      return out;
    }
  };
  LabeledDataset ds;
  ds.class_count = 2;
  ds.images.emplace_back(1, 1, 3, 0.0);
  ds.labels.push_back(0);
  auto task = CalibrationTask::for_kind(AugmentKind::BrightnessPlus);
  task.target_drop = 0.5;
  task.max_iterations = 12;
  EXPECT_THROW(calibrate(Step(), ds, task), CalibrationError);
}

TEST(Calibrate, TaskValidation) {
  auto t = CalibrationTask::for_kind(AugmentKind::GaussianBlur);
  EXPECT_EQ(t.base.size, 3);
  EXPECT_EQ(t.knob, Knob::Sigma);
  t.lo = t.hi;
  EXPECT_THROW(t.validate(), ParameterError);
  auto s = CalibrationTask::for_kind(AugmentKind::AdditiveSAP);
  EXPECT_EQ(s.base.q, 0.5);
  EXPECT_EQ(s.base.rho, 0.5);
  EXPECT_EQ(s.with_knob(0.3).p, 0.3);
}
