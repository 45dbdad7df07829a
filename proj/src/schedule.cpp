#include "robustft/schedule.hpp"

#include <set>

#include "robustft/errors.hpp"

namespace robustft {

std::string_view strategy_name(Strategy s) { return s == Strategy::IA ? "ia" : "ca"; }

Strategy parse_strategy(std::string_view text) {
  if (text == "ia" || text == "IA") return Strategy::IA;
  if (text == "ca" || text == "CA") return Strategy::CA;
  throw ParameterError("unknown strategy '" + std::string(text) + "' (expected ia or ca)");
}

StrategyConfig StrategyConfig::individual(const AugmentationSpec& spec) {
  StrategyConfig c;
  c.strategy = Strategy::IA;
  c.single = single_set(spec);
  return c;
}

StrategyConfig StrategyConfig::combined(const PresetTable& presets, const std::string& dataset) {
  StrategyConfig c;
  c.strategy = Strategy::CA;
  c.combined_plus = robustft::combined_plus(presets, dataset);
  c.combined_minus = robustft::combined_minus(presets, dataset);
  return c;
}

namespace {
void check_membership(const AugmentationSet& set, SetName expected, std::set<AugmentKind> kinds) {
  if (set.name != expected) {
    throw ContractError("strategy: expected " + std::string(set_name_string(expected)) + ", got " + set.label());
  }
  std::set<AugmentKind> got;
  for (const auto& s : set.specs) got.insert(s.kind);
  if (got != kinds || set.specs.size() != kinds.size()) {
    throw ContractError("strategy: " + set.label() + " does not hold exactly its five augmentation types");
  }
}
}  // namespace

void StrategyConfig::validate() const {
  if (strategy == Strategy::IA) {
    if (single.specs.size() != 1) throw ContractError("strategy: IA trains against exactly one augmentation");
    single.specs.front().validate();
    return;
  }
  const std::set<AugmentKind> shared = {AugmentKind::GaussianNoise, AugmentKind::AdditiveSAP, AugmentKind::GaussianBlur};
  auto plus = shared;
  plus.insert({AugmentKind::BrightnessPlus, AugmentKind::SaturationPlus});
  auto minus = shared;
  minus.insert({AugmentKind::BrightnessMinus, AugmentKind::SaturationMinus});
  check_membership(combined_plus, SetName::CombinedPlus, plus);
  check_membership(combined_minus, SetName::CombinedMinus, minus);
}

const AugmentationSet& select_set(const StrategyConfig& config, std::int64_t epoch, std::int64_t batch) {
  if (epoch < 0) throw ContractError("select_set: epoch must be >= 0");
  if (config.strategy == Strategy::IA) return config.single;
  const std::int64_t period = config.alternation == Alternation::PerEpoch ? epoch : batch;
  const bool even = period % 2 == 0;
  return even == config.plus_on_even ? config.combined_plus : config.combined_minus;
}

std::pair<Image, Image> make_pair(const Image& img, const AugmentationSet& set, const RandomStream& rng) {
  return {img, compose(img, set, rng)};
}

LabeledDataset at_extend(const LabeledDataset& ds, std::span<const AugmentationSet> sets, const RandomStream& rng) {
  ds.validate();
  LabeledDataset out;
  out.class_count = ds.class_count;
  out.split = ds.split;
  out.provenance = ds.provenance;
  out.images = ds.images;
  out.labels = ds.labels;
  out.images.reserve(ds.size() * (sets.size() + 1));
  for (std::size_t j = 0; j < sets.size(); ++j) {
    const RandomStream copy_rng = rng.split(j);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out.images.push_back(compose(ds.images[i], sets[j], copy_rng.split(i)));
      out.labels.push_back(ds.labels[i]);
    }
    out.provenance.push_back("augmented copy " + sets[j].label());
  }
  return out;
}

LabeledDataset at_extend(const LabeledDataset& ds, const AugmentationSet& set, const RandomStream& rng) {
  return at_extend(ds, std::span<const AugmentationSet>(&set, 1), rng);
}

RandomStream pair_stream(std::uint64_t seed, std::int64_t epoch, std::size_t image_index) {
  return RandomStream(seed).split(static_cast<std::uint64_t>(epoch)).split(image_index);
}

}  // namespace robustft
