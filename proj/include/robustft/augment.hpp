#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "robustft/image.hpp"
#include "robustft/random.hpp"

namespace robustft {

enum class AugmentKind {
  BrightnessPlus,
  BrightnessMinus,
  SaturationPlus,
  SaturationMinus,
  GaussianNoise,
  GaussianBlur,
  AdditiveSAP,
};

inline constexpr std::array<AugmentKind, 7> kAllAugmentKinds = {
    AugmentKind::BrightnessPlus, AugmentKind::BrightnessMinus, AugmentKind::GaussianBlur,
    AugmentKind::GaussianNoise,  AugmentKind::AdditiveSAP,     AugmentKind::SaturationPlus,
    AugmentKind::SaturationMinus,
};

/// Short label used in tables ("B+", "GN", ...).
std::string_view short_name(AugmentKind kind);
/// Identifier used in manifests ("brightness_plus", ...).
std::string_view slug(AugmentKind kind);
/// Accepts either a slug or a short label.
AugmentKind parse_kind(std::string_view text);

/// One augmentation type with its parameter vector. Only the fields relevant
/// to `kind` are read.
struct AugmentationSpec {
  AugmentKind kind = AugmentKind::BrightnessPlus;
  double delta = 0.0;  // brightness offset
  double alpha = 1.0;  // saturation factor
  double mu = 0.0;     // Gaussian noise mean
  double sigma = 0.0;  // Gaussian noise / blur standard deviation
  int size = 3;        // blur kernel size (odd)
  double p = 0.0;      // SAP probability
  double q = 0.5;      // SAP salt-to-pepper ratio
  double rho = 0.0;    // SAP strength

  /// Throws ParameterError when a relevant field violates its range.
  void validate() const;
  /// Parameters that leave every image unchanged.
  bool is_identity() const;
  std::string describe() const;

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

enum class SetName { CombinedPlus, CombinedMinus, Single };
std::string_view set_name_string(SetName name);

struct AugmentationSet {
  SetName name = SetName::Single;
  std::vector<AugmentationSpec> specs;

  std::string label() const;
};

// Individual augmentation functions. Every one clips its output to [0, 1].
Image brightness(const Image& img, double delta);
Image saturation(const Image& img, double alpha);
Image gaussian_noise(const Image& img, double mu, double sigma, RandomStream& rng);
Image gaussian_blur(const Image& img, int size, double sigma);
Image additive_sap(const Image& img, double p, double q, double rho, RandomStream& rng);

/// Dispatches on spec.kind.
Image apply(const Image& img, const AugmentationSpec& spec, RandomStream& rng);
/// Applies the set's specs in stored order; stage i draws from rng.split(i).
Image compose(const Image& img, const AugmentationSet& set, const RandomStream& rng);

/// Normalized s x s Gaussian kernel, row-major.
std::vector<double> gaussian_kernel(int size, double sigma);

// Hexcone RGB <-> HSL, all components in [0, 1].
std::array<double, 3> rgb_to_hsl(double r, double g, double b);
std::array<double, 3> hsl_to_rgb(double h, double s, double l);

/// Named augmentation presets, e.g. "cifar10/brightness_plus".
class PresetTable {
 public:
  static PresetTable builtin();
  static PresetTable parse(std::string_view text);
  static PresetTable load(const std::string& path);

  std::string to_text() const;
  void save(const std::string& path) const;

  const AugmentationSpec& get(const std::string& name) const;
  /// Preset for `kind` under a dataset prefix ("cifar10").
  const AugmentationSpec& get(const std::string& dataset, AugmentKind kind) const;
  bool contains(const std::string& name) const { return specs_.count(name) != 0; }
  void set(const std::string& name, const AugmentationSpec& spec);
  const std::map<std::string, AugmentationSpec>& entries() const { return specs_; }

 private:
  std::map<std::string, AugmentationSpec> specs_;
};

/// Preset name for a dataset/kind pair.
std::string preset_name(const std::string& dataset, AugmentKind kind);

/// {B+, S+, GB, GN, SAP} in composition order.
AugmentationSet combined_plus(const PresetTable& presets, const std::string& dataset);
/// {B-, S-, GB, GN, SAP} in composition order.
AugmentationSet combined_minus(const PresetTable& presets, const std::string& dataset);
AugmentationSet single_set(const AugmentationSpec& spec);

/// Order used for Combined sets; recorded in run manifests.
std::vector<std::string> composition_order();

}  // namespace robustft
