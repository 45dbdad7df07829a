#include "robustft/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "robustft/errors.hpp"
#include "robustft/kv.hpp"

namespace robustft {

namespace {

inline double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Reflect without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long last = static_cast<long>(n) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

constexpr const char* kBuiltinPresets = R"(# Augmentation strengths giving roughly a 10% absolute accuracy drop.
[cifar10/brightness_plus]
kind = brightness_plus
delta = 0.39

[cifar10/brightness_minus]
kind = brightness_minus
delta = -0.36

[cifar10/saturation_plus]
kind = saturation_plus
alpha = 6

[cifar10/saturation_minus]
kind = saturation_minus
alpha = 0

[cifar10/gaussian_noise]
kind = gaussian_noise
mu = 0
sigma = 0.075

[cifar10/gaussian_blur]
kind = gaussian_blur
size = 3
sigma = 0.675

[cifar10/additive_sap]
kind = additive_sap
p = 0.025
q = 0.5
rho = 0.5

[imagenet/brightness_plus]
kind = brightness_plus
delta = 0.43

[imagenet/brightness_minus]
kind = brightness_minus
delta = -0.32

[imagenet/saturation_plus]
kind = saturation_plus
alpha = 4

[imagenet/saturation_minus]
kind = saturation_minus
alpha = 0.2

[imagenet/gaussian_noise]
kind = gaussian_noise
mu = 0
sigma = 0.08

[imagenet/gaussian_blur]
kind = gaussian_blur
size = 3
sigma = 1.175

[imagenet/additive_sap]
kind = additive_sap
p = 0.01
q = 0.7
rho = 0.7
)";

}  // namespace

bool Image::in_unit_range() const noexcept {
  return std::all_of(pixels.begin(), pixels.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

bool bitwise_equal(const Image& a, const Image& b) {
  return a.height == b.height && a.width == b.width && a.channels == b.channels && a.pixels.size() == b.pixels.size() &&
         std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(double)) == 0;
}

std::string_view short_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::BrightnessPlus: return "B+";
    case AugmentKind::BrightnessMinus: return "B-";
    case AugmentKind::SaturationPlus: return "S+";
    case AugmentKind::SaturationMinus: return "S-";
    case AugmentKind::GaussianNoise: return "GN";
    case AugmentKind::GaussianBlur: return "GB";
    case AugmentKind::AdditiveSAP: return "SAP";
  }
  return "?";
}

std::string_view slug(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::BrightnessPlus: return "brightness_plus";
    case AugmentKind::BrightnessMinus: return "brightness_minus";
    case AugmentKind::SaturationPlus: return "saturation_plus";
    case AugmentKind::SaturationMinus: return "saturation_minus";
    case AugmentKind::GaussianNoise: return "gaussian_noise";
    case AugmentKind::GaussianBlur: return "gaussian_blur";
    case AugmentKind::AdditiveSAP: return "additive_sap";
  }
  return "?";
}

AugmentKind parse_kind(std::string_view text) {
  for (AugmentKind k : kAllAugmentKinds) {
    if (text == slug(k) || text == short_name(k)) return k;
  }
  throw ParameterError("unknown augmentation kind '" + std::string(text) + "'");
}

void AugmentationSpec::validate() const {
  auto fail = [this](const std::string& msg) {
    throw ParameterError(std::string(slug(kind)) + ": " + msg);
  };
  switch (kind) {
    case AugmentKind::BrightnessPlus:
    case AugmentKind::BrightnessMinus:
      if (!std::isfinite(delta)) fail("delta must be finite");
      break;
    case AugmentKind::SaturationPlus:
    case AugmentKind::SaturationMinus:
      if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
      break;
    case AugmentKind::GaussianNoise:
      if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma must be >= 0");
      if (!std::isfinite(mu)) fail("mu must be finite");
      break;
    case AugmentKind::GaussianBlur:
      if (size < 1 || size % 2 == 0) fail("kernel size must be odd and >= 1, got " + std::to_string(size));
      if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("sigma must be > 0");
      break;
    case AugmentKind::AdditiveSAP:
      if (!(p >= 0.0 && p <= 1.0)) fail("p must lie in [0,1]");
      if (!(q >= 0.0 && q <= 1.0)) fail("q must lie in [0,1]");
      if (!(rho >= 0.0) || !std::isfinite(rho)) fail("rho must be >= 0");
      break;
  }
}

bool AugmentationSpec::is_identity() const {
  switch (kind) {
    case AugmentKind::BrightnessPlus:
    case AugmentKind::BrightnessMinus: return delta == 0.0;
    case AugmentKind::SaturationPlus:
    case AugmentKind::SaturationMinus: return alpha == 1.0;
    case AugmentKind::GaussianNoise: return sigma == 0.0 && mu == 0.0;
    case AugmentKind::GaussianBlur: return size == 1;
    case AugmentKind::AdditiveSAP: return p == 0.0 || rho == 0.0;
  }
  return false;
}

std::string AugmentationSpec::describe() const {
  std::ostringstream os;
  os << short_name(kind) << '(';
  switch (kind) {
    case AugmentKind::BrightnessPlus:
    case AugmentKind::BrightnessMinus: os << "delta=" << format_double(delta); break;
    case AugmentKind::SaturationPlus:
    case AugmentKind::SaturationMinus: os << "alpha=" << format_double(alpha); break;
    case AugmentKind::GaussianNoise: os << "mu=" << format_double(mu) << ", sigma=" << format_double(sigma); break;
    case AugmentKind::GaussianBlur: os << "s=" << size << ", sigma=" << format_double(sigma); break;
    case AugmentKind::AdditiveSAP:
      os << "p=" << format_double(p) << ", q=" << format_double(q) << ", rho=" << format_double(rho);
      break;
  }
  os << ')';
  return os.str();
}

std::string_view set_name_string(SetName name) {
  switch (name) {
    case SetName::CombinedPlus: return "Combined+";
    case SetName::CombinedMinus: return "Combined-";
    case SetName::Single: return "Single";
  }
  return "?";
}

std::string AugmentationSet::label() const {
  if (name != SetName::Single) return std::string(set_name_string(name));
  std::string out = "Single(";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out += ',';
    out += short_name(specs[i].kind);
  }
  return out + ')';
}

Image brightness(const Image& img, double delta) {
  if (delta == 0.0) return img;
  Image out = img;
  for (double& v : out.pixels) v = clip01(v + delta);
  return out;
}

std::array<double, 3> rgb_to_hsl(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double l = 0.5 * (mx + mn);
  if (mx == mn) return {0.0, 0.0, l};
  const double d = mx - mn;
  const double s = l > 0.5 ? d / (2.0 - mx - mn) : d / (mx + mn);
  double h;
  if (mx == r) {
    h = (g - b) / d + (g < b ? 6.0 : 0.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  return {h / 6.0, s, l};
}

namespace {
double hue_to_channel(double p, double q, double t) {
  if (t < 0.0) t += 1.0;
  if (t > 1.0) t -= 1.0;
  if (t < 1.0 / 6.0) return p + (q - p) * 6.0 * t;
  if (t < 0.5) return q;
  if (t < 2.0 / 3.0) return p + (q - p) * (2.0 / 3.0 - t) * 6.0;
  return p;
}
}  // namespace

std::array<double, 3> hsl_to_rgb(double h, double s, double l) {
  if (s == 0.0) return {l, l, l};
  const double q = l < 0.5 ? l * (1.0 + s) : l + s - l * s;
  const double p = 2.0 * l - q;
  return {hue_to_channel(p, q, h + 1.0 / 3.0), hue_to_channel(p, q, h), hue_to_channel(p, q, h - 1.0 / 3.0)};
}

Image saturation(const Image& img, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("saturation: alpha must be >= 0");
  if (img.channels != 3) throw DimensionError("saturation: image needs 3 channels, got " + std::to_string(img.channels));
  if (alpha == 1.0) return img;
  Image out = img;
  for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
    auto [h, s, l] = rgb_to_hsl(out.pixels[i], out.pixels[i + 1], out.pixels[i + 2]);
    const auto rgb = hsl_to_rgb(h, clip01(alpha * s), l);
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i + c] = clip01(rgb[c]);
  }
  return out;
}

Image gaussian_noise(const Image& img, double mu, double sigma, RandomStream& rng) {
  if (!(sigma >= 0.0)) throw ParameterError("gaussian_noise: sigma must be >= 0");
  Image out = img;
  if (sigma == 0.0 && mu == 0.0) return out;
  for (double& v : out.pixels) v = clip01(v + mu + sigma * rng.normal());
  return out;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ParameterError("gaussian_blur: kernel size must be odd, got " + std::to_string(size));
  if (!(sigma > 0.0)) throw ParameterError("gaussian_blur: sigma must be > 0");
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size * size));
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((dy + r) * size + (dx + r))] = v;
      total += v;
    }
  }
  for (double& v : k) v /= total;
  return k;
}

Image gaussian_blur(const Image& img, int size, double sigma) {
  const auto kernel = gaussian_kernel(size, sigma);
  if (size == 1) return img;
  const int r = size / 2;
  Image out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        // Accumulating offsets from the center sample makes a constant
        // neighbourhood an exact fixed point regardless of rounding in the kernel sum.
        const double center = img.at(y, x, c);
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const std::size_t sy = reflect_index(static_cast<long>(y) + dy, img.height);
          for (int dx = -r; dx <= r; ++dx) {
            const std::size_t sx = reflect_index(static_cast<long>(x) + dx, img.width);
            acc += kernel[static_cast<std::size_t>((dy + r) * size + (dx + r))] * (img.at(sy, sx, c) - center);
          }
        }
        out.at(y, x, c) = clip01(center + acc);
      }
    }
  }
  return out;
}

Image additive_sap(const Image& img, double p, double q, double rho, RandomStream& rng) {
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0)) throw ParameterError("additive_sap: p and q must lie in [0,1]");
  if (!(rho >= 0.0)) throw ParameterError("additive_sap: rho must be >= 0");
  Image out = img;
  if (p == 0.0) return out;
  const std::size_t locations = img.height * img.width;
  for (std::size_t i = 0; i < locations; ++i) {
    const double hit = rng.uniform();
    const double salt = rng.uniform();
    if (hit >= p) continue;
    const double offset = salt < q ? rho : -rho;
    for (std::size_t c = 0; c < img.channels; ++c) {
      double& v = out.pixels[i * img.channels + c];
      v = clip01(v + offset);
    }
  }
  return out;
}

Image apply(const Image& img, const AugmentationSpec& spec, RandomStream& rng) {
  spec.validate();
  switch (spec.kind) {
    case AugmentKind::BrightnessPlus:
    case AugmentKind::BrightnessMinus: return brightness(img, spec.delta);
    case AugmentKind::SaturationPlus:
    case AugmentKind::SaturationMinus: return saturation(img, spec.alpha);
    case AugmentKind::GaussianNoise: return gaussian_noise(img, spec.mu, spec.sigma, rng);
    case AugmentKind::GaussianBlur: return gaussian_blur(img, spec.size, spec.sigma);
    case AugmentKind::AdditiveSAP: return additive_sap(img, spec.p, spec.q, spec.rho, rng);
  }
  return img;
}

Image compose(const Image& img, const AugmentationSet& set, const RandomStream& rng) {
  if (set.specs.empty()) throw ContractError("compose: augmentation set is empty");
  Image out = img;
  for (std::size_t i = 0; i < set.specs.size(); ++i) {
    RandomStream stage = rng.split(i);
    out = apply(out, set.specs[i], stage);
  }
  for (double& v : out.pixels) v = clip01(v);
  return out;
}

std::string preset_name(const std::string& dataset, AugmentKind kind) { return dataset + "/" + std::string(slug(kind)); }

PresetTable PresetTable::builtin() { return parse(kBuiltinPresets); }

PresetTable PresetTable::parse(std::string_view text) {
  const KvDocument doc = KvDocument::parse(text);
  PresetTable table;
  for (const auto& section : doc.sections()) {
    if (section.name.empty()) continue;
    AugmentationSpec spec;
    spec.kind = parse_kind(section.require("kind"));
    if (const auto* v = section.find("delta")) spec.delta = parse_double(*v);
    if (const auto* v = section.find("alpha")) spec.alpha = parse_double(*v);
    if (const auto* v = section.find("mu")) spec.mu = parse_double(*v);
    if (const auto* v = section.find("sigma")) spec.sigma = parse_double(*v);
    if (const auto* v = section.find("size")) {
      const double s = parse_double(*v);
      if (s != std::floor(s)) throw FormatError("[" + section.name + "] size must be an integer");
      spec.size = static_cast<int>(s);
    }
    if (const auto* v = section.find("p")) spec.p = parse_double(*v);
    if (const auto* v = section.find("q")) spec.q = parse_double(*v);
    if (const auto* v = section.find("rho")) spec.rho = parse_double(*v);
    try {
      spec.validate();
    } catch (const ParameterError& e) {
      throw FormatError("[" + section.name + "] " + e.what());
    }
    table.specs_[section.name] = spec;
  }
  return table;
}

PresetTable PresetTable::load(const std::string& path) { return parse(read_text_file(path)); }

std::string PresetTable::to_text() const {
  KvDocument doc;
  for (const auto& [name, spec] : specs_) {
    auto& s = doc.add_section(name);
    s.set("kind", std::string(slug(spec.kind)));
    switch (spec.kind) {
      case AugmentKind::BrightnessPlus:
      case AugmentKind::BrightnessMinus: s.set("delta", format_double(spec.delta)); break;
      case AugmentKind::SaturationPlus:
      case AugmentKind::SaturationMinus: s.set("alpha", format_double(spec.alpha)); break;
      case AugmentKind::GaussianNoise:
        s.set("mu", format_double(spec.mu));
        s.set("sigma", format_double(spec.sigma));
        break;
      case AugmentKind::GaussianBlur:
        s.set("size", std::to_string(spec.size));
        s.set("sigma", format_double(spec.sigma));
        break;
      case AugmentKind::AdditiveSAP:
        s.set("p", format_double(spec.p));
        s.set("q", format_double(spec.q));
        s.set("rho", format_double(spec.rho));
        break;
    }
  }
  return doc.to_text();
}

void PresetTable::save(const std::string& path) const { write_file_atomic(path, to_text()); }

const AugmentationSpec& PresetTable::get(const std::string& name) const {
  const auto it = specs_.find(name);
  if (it == specs_.end()) throw FormatError("no augmentation preset named '" + name + "'");
  return it->second;
}

const AugmentationSpec& PresetTable::get(const std::string& dataset, AugmentKind kind) const {
  return get(preset_name(dataset, kind));
}

void PresetTable::set(const std::string& name, const AugmentationSpec& spec) {
  spec.validate();
  specs_[name] = spec;
}

std::vector<std::string> composition_order() { return {"brightness", "saturation", "gaussian_blur", "gaussian_noise", "additive_sap"}; }

namespace {
AugmentationSet combined(const PresetTable& presets, const std::string& dataset, SetName name) {
  const bool plus = name == SetName::CombinedPlus;
  AugmentationSet set{name, {}};
  set.specs.push_back(presets.get(dataset, plus ? AugmentKind::BrightnessPlus : AugmentKind::BrightnessMinus));
  set.specs.push_back(presets.get(dataset, plus ? AugmentKind::SaturationPlus : AugmentKind::SaturationMinus));
  set.specs.push_back(presets.get(dataset, AugmentKind::GaussianBlur));
  set.specs.push_back(presets.get(dataset, AugmentKind::GaussianNoise));
  set.specs.push_back(presets.get(dataset, AugmentKind::AdditiveSAP));
  return set;
}
}  // namespace

AugmentationSet combined_plus(const PresetTable& presets, const std::string& dataset) {
  return combined(presets, dataset, SetName::CombinedPlus);
}

AugmentationSet combined_minus(const PresetTable& presets, const std::string& dataset) {
  return combined(presets, dataset, SetName::CombinedMinus);
}

AugmentationSet single_set(const AugmentationSpec& spec) {
  spec.validate();
  return AugmentationSet{SetName::Single, {spec}};
}

}  // namespace robustft
