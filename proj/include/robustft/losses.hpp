#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "robustft/autodiff.hpp"
#include "robustft/model.hpp"

namespace robustft {

enum class Method { AT, ST, FMA };
std::string_view method_name(Method m);
Method parse_method(std::string_view text);

/// Distance used by the stability-training regularizer.
enum class StDistance { KL, L2 };

struct LossConfig {
  Method method = Method::FMA;
  double gamma = 1.0;          // FMA weight
  double st_weight = 1.0;      // ST weight
  double epsilon_mean = 1e-8;  // floor on the clean feature-map mean
  StDistance st_distance = StDistance::KL;

  void validate() const;
};

/// Mean over the batch of -logp[n, labels[n]].
Var cross_entropy(const Var& logp, std::span<const int> labels);

/// Feature-map augmentation loss. For each sample and tapped layer the
/// clean/augmented difference is divided by the clean map's mean, squared,
/// summed and divided by the map size; layers are averaged, then samples.
Var fma_loss(std::span<const Var> taps_clean, std::span<const Var> taps_aug, double epsilon_mean);

/// Mean over the batch of KL(softmax_clean || softmax_aug), or of the squared
/// L2 distance between the two softmax vectors.
Var st_loss(const Var& logp_clean, const Var& logp_aug, StDistance distance = StDistance::KL);

struct LossBreakdown {
  Var total;
  double task = 0.0;            // cross-entropy part
  double regularizer = 0.0;     // unweighted FMA/ST term (0 for AT)
};

/// Objective for one aligned clean/augmented batch. AT trains on both halves
/// with labels; ST and FMA use labels for the clean half only.
LossBreakdown total_loss(const LossConfig& config, const Model& model, const Tensor& batch_clean,
                         const Tensor& batch_aug, std::span<const int> labels);

}  // namespace robustft
