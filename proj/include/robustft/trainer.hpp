#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "robustft/augment.hpp"
#include "robustft/dataset.hpp"
#include "robustft/losses.hpp"
#include "robustft/model.hpp"
#include "robustft/schedule.hpp"

namespace robustft {

inline constexpr const char* kCodeVersion = "robustft 0.1.0";

/// Classical momentum: v <- momentum * v + g; theta <- theta - rate * v.
void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double rate, double momentum);

/// Velocity buffers for every parameter of one model, zero at construction.
class SgdMomentum {
 public:
  SgdMomentum(const Model& model, double momentum);
  /// Applies one step using the gradients currently held by the parameters.
  void step(const Model& model, double rate);
  const std::vector<Tensor>& velocities() const { return velocity_; }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

enum class Stage { Baseline, Finetune };
std::string_view stage_name(Stage s);

struct RateStage {
  double rate = 1e-2;
  int epochs = 1;
};

struct EpochRecord {
  int epoch = 0;
  double rate = 0.0;
  std::string set_label;  // augmentation set used for training ("" for baseline)
  double loss = 0.0;
  double task_loss = 0.0;
  double regularizer = 0.0;
  double clean_accuracy = 0.0;
  std::map<std::string, double> augmented_accuracy;  // keyed by short name ("B+", ...)
};

struct TrainConfig {
  Stage stage = Stage::Baseline;
  int epochs = 40;
  std::vector<RateStage> schedule{{1e-2, 20}, {1e-4, 10}, {1e-6, 10}};
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  LossConfig loss;
  StrategyConfig strategy;
  /// Individual augmentations evaluated after every epoch (training curves).
  std::vector<AugmentationSpec> eval_specs;
  /// Use at most this many validation images for per-epoch curves; 0 = all.
  std::size_t curve_eval_limit = 0;
  int checkpoint_every = 0;
  std::string checkpoint_dir;
  std::string metrics_csv;
  std::function<void(const EpochRecord&)> on_epoch;

  /// Two-stage protocol defaults.
  static TrainConfig baseline_defaults();
  static TrainConfig finetune_defaults();

  double rate_at(int epoch) const;
  void validate() const;
};

/// Reproducibility record of one training run.
struct RunManifest {
  std::string stage;
  std::string code_version = kCodeVersion;
  std::string method;    // finetune only
  std::string strategy;  // finetune only
  double gamma = 0.0;
  double st_weight = 0.0;
  std::string config_text;  // JSON of every training knob
  PresetTable augmentations;
  std::vector<std::string> composition_order;
  std::string parity;
  std::vector<std::string> data_provenance;
  std::vector<EpochRecord> epochs;
  std::map<std::string, double> final_metrics;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

struct TrainResult {
  Model model;
  RunManifest manifest;
};

/// Stage one: cross-entropy on clean images; returns the best-validation snapshot.
TrainResult train_baseline(const Model& init, const LabeledDataset& train, const LabeledDataset& val,
                           const TrainConfig& config);

/// Stage two: robustness finetuning with the configured method and strategy;
/// returns the final-epoch snapshot.
TrainResult finetune(const Model& baseline, const LabeledDataset& train, const LabeledDataset& val,
                     const TrainConfig& config);

struct GridSearchRow {
  double value = 0.0;
  double clean_accuracy = 0.0;
  double mean_augmented_accuracy = 0.0;
  bool feasible = false;
};

struct GridSearchResult {
  double best = 0.0;
  bool constraint_violated = false;
  std::vector<GridSearchRow> rows;
};

/// Short finetune per grid value (gamma for FMA, st_weight for ST). Picks the
/// best mean augmented accuracy among runs whose clean accuracy stays within
/// `clean_margin` of `baseline_clean`; if none qualify, picks the best
/// clean + augmented sum and flags it.
GridSearchResult grid_search_gamma(const Model& baseline, const LabeledDataset& train, const LabeledDataset& val,
                                   std::span<const double> grid, const TrainConfig& config, double baseline_clean,
                                   double clean_margin = 0.01);

}  // namespace robustft
