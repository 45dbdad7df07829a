#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

#include "robustft/augment.hpp"
#include "robustft/dataset.hpp"

namespace robustft {

enum class Strategy { IA, CA };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view text);

enum class Alternation {
  PerEpoch,
  PerBatch,  // experimental; kept for ablations
};

struct StrategyConfig {
  Strategy strategy = Strategy::CA;
  AugmentationSet single;         // IA
  AugmentationSet combined_plus;  // CA
  AugmentationSet combined_minus; // CA
  Alternation alternation = Alternation::PerEpoch;
  /// Combined+ is used on even periods when true.
  bool plus_on_even = true;

  static StrategyConfig individual(const AugmentationSpec& spec);
  static StrategyConfig combined(const PresetTable& presets, const std::string& dataset);

  void validate() const;
};

/// Set in force for an epoch (and batch, under per-batch alternation).
const AugmentationSet& select_set(const StrategyConfig& config, std::int64_t epoch, std::int64_t batch = 0);

/// Returns (clean, augmented); the clean image is copied untouched.
std::pair<Image, Image> make_pair(const Image& img, const AugmentationSet& set, const RandomStream& rng);

/// Clean images followed by one labeled augmented copy per set; image i of
/// copy j draws from rng.split(j).split(i).
LabeledDataset at_extend(const LabeledDataset& ds, std::span<const AugmentationSet> sets, const RandomStream& rng);
LabeledDataset at_extend(const LabeledDataset& ds, const AugmentationSet& set, const RandomStream& rng);

/// Stream for the augmented copy of `image_index` in `epoch` of a run seeded by `seed`.
RandomStream pair_stream(std::uint64_t seed, std::int64_t epoch, std::size_t image_index);

}  // namespace robustft
