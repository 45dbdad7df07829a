#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "robustft/augment.hpp"
#include "robustft/errors.hpp"

using namespace robustft;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  RandomStream rng(seed);
  Image img(h, w, 3);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

}  // namespace

TEST(Brightness, PresetArithmeticAndClipping) {
  Image img(1, 1, 3, 0.5);
  EXPECT_NEAR(brightness(img, 0.39).pixels[0], 0.89, 1e-15);
  Image hi(1, 1, 3, 0.8);
  EXPECT_EQ(brightness(hi, 0.39).pixels[0], 1.0);
  EXPECT_EQ(brightness(Image(1, 1, 3, 0.2), -0.36).pixels[0], 0.0);
  const Image r = random_image(4, 4, 1);
  EXPECT_TRUE(bitwise_equal(brightness(r, 0.0), r));
}

TEST(Saturation, GrayscaleAtZeroAndIdentityAtOne) {
  const Image r = random_image(8, 8, 2);
  const Image g = saturation(r, 0.0);
  for (std::size_t i = 0; i < g.pixels.size(); i += 3) {
    EXPECT_EQ(g.pixels[i], g.pixels[i + 1]);
    EXPECT_EQ(g.pixels[i], g.pixels[i + 2]);
  }
  const Image same = saturation(r, 1.0);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) EXPECT_NEAR(same.pixels[i], r.pixels[i], 1e-12);
  EXPECT_THROW(saturation(r, -0.1), ParameterError);
}

TEST(Saturation, PureRedAtHalfMatchesReferenceConversion) {
  Image red(1, 1, 3);
  red.pixels = {1.0, 0.0, 0.0};
  const auto hsl = oracle::rgb_to_hsl(1.0, 0.0, 0.0);
  EXPECT_EQ(hsl[0], 0.0);
  EXPECT_EQ(hsl[1], 1.0);
  EXPECT_EQ(hsl[2], 0.5);
  const auto expected = oracle::hsl_to_rgb(hsl[0], 0.5 * hsl[1], hsl[2]);
  // Published tables give hsl(0, 50%, 50%) = rgb(191, 64, 64) = (0.75, 0.25, 0.25).
  EXPECT_NEAR(expected[0], 0.75, 1e-15);
  EXPECT_NEAR(expected[1], 0.25, 1e-15);
  const Image out = saturation(red, 0.5);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.pixels[c], expected[c], 1e-12);
}

TEST(Saturation, HslRoundTripAgreesWithOracle) {
  RandomStream rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto mine = rgb_to_hsl(r, g, b);
    const auto ref = oracle::rgb_to_hsl(r, g, b);
    for (int c = 0; c < 3; ++c) ASSERT_NEAR(mine[c], ref[c], 1e-12);
    const auto back = hsl_to_rgb(mine[0], mine[1], mine[2]);
    ASSERT_NEAR(back[0], r, 1e-12);
    ASSERT_NEAR(back[1], g, 1e-12);
    ASSERT_NEAR(back[2], b, 1e-12);
  }
}

TEST(GaussianNoise, ZeroSigmaIsIdentityAndStdMatches) {
  const Image r = random_image(4, 4, 3);
  RandomStream rng(1);
  EXPECT_TRUE(bitwise_equal(gaussian_noise(r, 0.0, 0.0, rng), r));

  // 1000 x 334 x 3 ~ 1e6 values around mid-gray; clipping at 0.075 is ~6.7 sigma away.
  const Image gray(1000, 334, 3, 0.5);
  RandomStream noise(42);
  const Image out = gaussian_noise(gray, 0.0, 0.075, noise);
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double d = out.pixels[i] - 0.5;
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(out.pixels.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 0.075, 0.075 * 0.01);
  EXPECT_NEAR(s / n, 0.0, 3 * 0.075 / std::sqrt(n));
}

TEST(GaussianBlur, KernelNormalizedAndConstantFixedPoint) {
  const auto k = gaussian_kernel(3, 0.675);
  double total = 0.0;
  for (double v : k) total += v;
  EXPECT_NEAR(total, 1.0, 1e-15);
  const Image c(9, 7, 3, 0.3137);
  EXPECT_TRUE(bitwise_equal(gaussian_blur(c, 3, 0.675), c));
  EXPECT_TRUE(bitwise_equal(gaussian_blur(c, 5, 1.175), c));
  EXPECT_THROW(gaussian_blur(c, 4, 1.0), ParameterError);
  EXPECT_THROW(gaussian_blur(c, 3, 0.0), ParameterError);
}

TEST(GaussianBlur, ImpulseResponseEqualsKernel) {
  Image img(7, 7, 3, 0.0);
  for (std::size_t c = 0; c < 3; ++c) img.at(3, 3, c) = 1.0;
  const double sigma = 0.675;
  // Kernel from the Gaussian formula, normalized over the 3x3 window.
  double w[3][3], total = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) total += w[dy + 1][dx + 1] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  const Image out = gaussian_blur(img, 3, sigma);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      EXPECT_NEAR(out.at(3 + dy, 3 + dx, 1), w[1 - dy][1 - dx] / total, 1e-15);
  EXPECT_EQ(out.at(0, 0, 0), 0.0);
}

TEST(AdditiveSap, ZeroProbabilityIsIdentity) {
  const Image r = random_image(5, 5, 4);
  RandomStream rng(3);
  EXPECT_TRUE(bitwise_equal(additive_sap(r, 0.0, 0.5, 0.5, rng), r));
}

TEST(AdditiveSap, RatesWithinThreeStandardErrors) {
  const double p = 0.025, q = 0.5, rho = 0.5;
  const Image gray(1000, 1000, 3, 0.5);
  RandomStream rng(2024);
  const Image out = additive_sap(gray, p, q, rho, rng);
  std::size_t hit = 0, salt = 0;
  for (std::size_t i = 0; i < 1000 * 1000; ++i) {
    const double v = out.pixels[3 * i];
    // Shared mask: every channel of a location moves together.
    ASSERT_EQ(v, out.pixels[3 * i + 1]);
    ASSERT_EQ(v, out.pixels[3 * i + 2]);
    if (v != 0.5) {
      ++hit;
      salt += v == 1.0;
    }
  }
  const double n = 1e6;
  const double p_hat = hit / n;
  EXPECT_LE(std::abs(p_hat - p), 3 * std::sqrt(p * (1 - p) / n));
  const double q_hat = static_cast<double>(salt) / static_cast<double>(hit);
  EXPECT_LE(std::abs(q_hat - q), 3 * std::sqrt(q * (1 - q) / static_cast<double>(hit)));
}

TEST(Compose, SingleElementMatchesDirectApplication) {
  const Image r = random_image(6, 6, 5);
  const PresetTable presets = PresetTable::builtin();
  const RandomStream root(77);
  for (AugmentKind k : kAllAugmentKinds) {
    const AugmentationSpec& s = presets.get("cifar10", k);
    RandomStream stage = root.split(0);
    EXPECT_TRUE(bitwise_equal(compose(r, single_set(s), root), apply(r, s, stage))) << slug(k);
  }
  EXPECT_THROW(compose(r, AugmentationSet{}, root), ContractError);
}

TEST(Compose, InversePairAtMidGray) {
  const Image gray(4, 4, 3, 0.5);
  AugmentationSet set;
  set.specs = {{.kind = AugmentKind::BrightnessPlus, .delta = 0.25}, {.kind = AugmentKind::BrightnessMinus, .delta = -0.25}};
  EXPECT_TRUE(bitwise_equal(compose(gray, set, RandomStream(1)), gray));
  set.specs[0].delta = 0.39;
  set.specs[1].delta = -0.39;
  const Image out = compose(gray, set, RandomStream(1));
  for (double v : out.pixels) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Compose, CombinedSetsHaveExactMembershipAndOrder) {
  const PresetTable presets = PresetTable::builtin();
  const auto plus = combined_plus(presets, "cifar10");
  const auto minus = combined_minus(presets, "cifar10");
  auto kinds = [](const AugmentationSet& s) {
    std::vector<AugmentKind> out;
    for (const auto& spec : s.specs) out.push_back(spec.kind);
    return out;
  };
  using K = AugmentKind;
  EXPECT_EQ(kinds(plus), (std::vector<K>{K::BrightnessPlus, K::SaturationPlus, K::GaussianBlur, K::GaussianNoise, K::AdditiveSAP}));
  EXPECT_EQ(kinds(minus),
            (std::vector<K>{K::BrightnessMinus, K::SaturationMinus, K::GaussianBlur, K::GaussianNoise, K::AdditiveSAP}));
  EXPECT_EQ(plus.label(), "Combined+");
  EXPECT_EQ(minus.label(), "Combined-");
}

TEST(Augment, SeededDeterminismIsBitwise) {
  const Image r = random_image(8, 8, 6);
  const auto set = combined_plus(PresetTable::builtin(), "cifar10");
  EXPECT_TRUE(bitwise_equal(compose(r, set, RandomStream(5)), compose(r, set, RandomStream(5))));
  EXPECT_FALSE(bitwise_equal(compose(r, set, RandomStream(5)), compose(r, set, RandomStream(6))));
}

TEST(Augment, OutputStaysInUnitRangeUnderFuzzing) {
  RandomStream fuzz(99);
  for (int i = 0; i < 2000; ++i) {
    const Image img = random_image(4, 4, fuzz.next_u64());
    AugmentationSpec s;
    s.kind = kAllAugmentKinds[fuzz.below(7)];
    s.delta = 4 * fuzz.uniform() - 2;
    s.alpha = 30 * fuzz.uniform();
    s.mu = fuzz.uniform() - 0.5;
    s.sigma = 0.01 + 3 * fuzz.uniform();
    s.size = 1 + 2 * static_cast<int>(fuzz.below(3));
    s.p = fuzz.uniform();
    s.q = fuzz.uniform();
    s.rho = 2 * fuzz.uniform();
    RandomStream rng = fuzz.split(static_cast<std::uint64_t>(i));
    ASSERT_TRUE(apply(img, s, rng).in_unit_range()) << s.describe();
  }
}

TEST(Augment, IdentityParametersAreBitwiseNoOps) {
  const Image r = random_image(6, 5, 8);
  RandomStream rng(1);
  for (const AugmentationSpec& s : {AugmentationSpec{.kind = AugmentKind::BrightnessPlus, .delta = 0.0},
                                    AugmentationSpec{.kind = AugmentKind::SaturationMinus, .alpha = 1.0},
                                    AugmentationSpec{.kind = AugmentKind::GaussianNoise, .sigma = 0.0},
                                    AugmentationSpec{.kind = AugmentKind::GaussianBlur, .sigma = 1.0, .size = 1},
                                    AugmentationSpec{.kind = AugmentKind::AdditiveSAP, .p = 0.0, .rho = 0.5}}) {
    EXPECT_TRUE(s.is_identity());
    EXPECT_TRUE(bitwise_equal(apply(r, s, rng), r)) << s.describe();
  }
}

TEST(Augment, NamesRoundTrip) {
  std::set<std::string> seen;
  for (AugmentKind k : kAllAugmentKinds) {
    EXPECT_EQ(parse_kind(slug(k)), k);
    EXPECT_EQ(parse_kind(short_name(k)), k);
    seen.insert(std::string(slug(k)));
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_THROW(parse_kind("sharpen"), ParameterError);
}

TEST(Presets, PublishedValues) {
  const PresetTable t = PresetTable::builtin();
  EXPECT_EQ(t.get("cifar10/brightness_plus").delta, 0.39);
  EXPECT_EQ(t.get("cifar10/brightness_minus").delta, -0.36);
  EXPECT_EQ(t.get("cifar10/saturation_plus").alpha, 6.0);
  EXPECT_EQ(t.get("cifar10/saturation_minus").alpha, 0.0);
  EXPECT_EQ(t.get("cifar10/gaussian_noise").sigma, 0.075);
  EXPECT_EQ(t.get("cifar10/gaussian_noise").mu, 0.0);
  EXPECT_EQ(t.get("cifar10/gaussian_blur").size, 3);
  EXPECT_EQ(t.get("cifar10/gaussian_blur").sigma, 0.675);
  const auto& sap = t.get("cifar10/additive_sap");
  EXPECT_EQ(sap.p, 0.025);
  EXPECT_EQ(sap.q, 0.5);
  EXPECT_EQ(sap.rho, 0.5);
  EXPECT_EQ(t.get("imagenet/brightness_plus").delta, 0.43);
  EXPECT_EQ(t.get("imagenet/brightness_minus").delta, -0.32);
  EXPECT_EQ(t.get("imagenet/saturation_plus").alpha, 4.0);
  EXPECT_EQ(t.get("imagenet/saturation_minus").alpha, 0.2);
  EXPECT_EQ(t.get("imagenet/gaussian_noise").sigma, 0.08);
  EXPECT_EQ(t.get("imagenet/gaussian_blur").sigma, 1.175);
  EXPECT_EQ(t.get("imagenet/additive_sap").p, 0.01);
  EXPECT_EQ(t.get("imagenet/additive_sap").q, 0.7);
  EXPECT_EQ(t.get("imagenet/additive_sap").rho, 0.7);
}

TEST(Presets, TextRoundTripAndErrors) {
  const PresetTable t = PresetTable::builtin();
  const PresetTable back = PresetTable::parse(t.to_text());
  EXPECT_EQ(back.entries(), t.entries());
  EXPECT_THROW(t.get("cifar10/sharpen"), FormatError);
  EXPECT_THROW(PresetTable::parse("[x]\nkind = gaussian_blur\nsize = 4\nsigma = 1\n"), FormatError);
  EXPECT_THROW(PresetTable::parse("[x]\nkind = brightness_plus\ndelta = abc\n"), FormatError);
}
