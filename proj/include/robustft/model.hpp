#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robustft/autodiff.hpp"
#include "robustft/image.hpp"

namespace robustft {

/// Which layer outputs feed the feature-map loss.
enum class TapPolicy {
  BlockOutputs,  // last ReLU of every conv block
  EveryConv,     // every conv ReLU
};

struct ConvBlock {
  std::size_t filters = 16;
  std::size_t repeats = 2;
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

/// VGG-style layout: 3x3 same-padded conv + ReLU repeated per block, a 2x2
/// max pool after each block, then dense layers and the class layer.
struct ArchitectureDescriptor {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::vector<ConvBlock> blocks{{16, 2}, {32, 2}, {64, 2}};
  std::vector<std::size_t> dense_widths{128};
  std::size_t classes = 10;
  TapPolicy taps = TapPolicy::BlockOutputs;

  void validate() const;
  std::size_t tap_count() const;
  std::string to_text() const;
  static ArchitectureDescriptor parse(std::string_view text);

  friend bool operator==(const ArchitectureDescriptor&, const ArchitectureDescriptor&) = default;
};

struct TrainingMetadata {
  std::int64_t epoch = 0;
  std::uint64_t seed = 0;
  std::string stage = "init";
};

/// Architecture plus parameters. Parameters are graph leaves so a forward
/// pass can be differentiated with respect to them.
class Model {
 public:
  /// He-uniform weights, zero biases.
  static Model create(const ArchitectureDescriptor& desc, std::uint64_t seed);
  /// All parameters zero.
  static Model zeros(const ArchitectureDescriptor& desc);

  const ArchitectureDescriptor& descriptor() const { return desc_; }
  const std::vector<std::pair<std::string, Var>>& parameters() const { return params_; }
  const Var& parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  /// Deep copy; the copy's parameters are independent leaves.
  Model clone() const;
  void zero_grad();

  TrainingMetadata metadata;

 private:
  ArchitectureDescriptor desc_;
  std::vector<std::pair<std::string, Var>> params_;

  friend Model load_model(std::string_view bytes);
};

struct ForwardResult {
  Var logits;
  std::vector<Var> taps;
};

/// batch is [N, C, H, W].
ForwardResult forward(const Model& model, const Tensor& batch, bool want_taps);

/// Stacks HWC images into an NCHW tensor.
Tensor to_batch(std::span<const Image> images);
Tensor to_batch(std::span<const Image* const> images);

/// Argmax per row of logits.
std::vector<int> predict_labels(const Model& model, const Tensor& batch);

// Versioned binary snapshot.
inline constexpr char kSnapshotMagic[8] = {'R', 'F', 'T', 'S', 'N', 'A', 'P', '\0'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

std::string save_model(const Model& model);
Model load_model(std::string_view bytes);
void save_model_file(const Model& model, const std::string& path);
Model load_model_file(const std::string& path);

}  // namespace robustft
