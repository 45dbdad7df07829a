#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "robustft/augment.hpp"
#include "robustft/dataset.hpp"
#include "robustft/model.hpp"

namespace robustft {

/// Seed for stochastic augmentations during evaluation, so repeated
/// evaluations of the same condition see identical noise.
inline constexpr std::uint64_t kEvalSeed = 0x5eed0fe7a1ULL;

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<int> predict(std::span<const Image> images) const = 0;
};

class ModelClassifier final : public Classifier {
 public:
  explicit ModelClassifier(const Model& model, std::size_t batch_size = 250) : model_(model), batch_size_(batch_size) {}
  std::vector<int> predict(std::span<const Image> images) const override;

 private:
  const Model& model_;
  std::size_t batch_size_;
};

/// Top-1 accuracy on clean data (spec empty) or on data augmented with `spec`.
double eval_accuracy(const Classifier& clf, const LabeledDataset& ds, const std::optional<AugmentationSpec>& spec,
                     std::uint64_t seed = kEvalSeed);
/// Top-1 accuracy on data augmented with a composed set.
double eval_accuracy(const Classifier& clf, const LabeledDataset& ds, const AugmentationSet& set,
                     std::uint64_t seed = kEvalSeed);

enum class Knob { Delta, Alpha, Sigma, P };

/// Bisection problem for one augmentation strength knob. Every other field
/// of `base` stays fixed.
struct CalibrationTask {
  AugmentationSpec base;
  Knob knob = Knob::Delta;
  double lo = 0.0;
  double hi = 1.0;
  /// True when larger knob values distort more (B+, S+, GN, GB, SAP).
  bool stronger_high = true;
  double target_drop = 0.10;
  double tolerance = 0.005;
  int max_iterations = 30;

  static CalibrationTask for_kind(AugmentKind kind);
  AugmentationSpec with_knob(double value) const;
  double weak_end() const { return stronger_high ? lo : hi; }
  double strong_end() const { return stronger_high ? hi : lo; }
  void validate() const;
};

struct CalibrationResult {
  AugmentationSpec spec;
  double knob_value = 0.0;
  double clean_accuracy = 0.0;
  double augmented_accuracy = 0.0;
  double drop = 0.0;
  /// The strong end of the range could not reach the target drop.
  bool saturated = false;
  int iterations = 0;
  std::vector<std::pair<double, double>> trace;  // (knob, drop) for each evaluation
};

CalibrationResult calibrate(const Classifier& clf, const LabeledDataset& valset, const CalibrationTask& task,
                            std::uint64_t seed = kEvalSeed, std::optional<double> clean_accuracy = std::nullopt);

}  // namespace robustft
