#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "robustft/image.hpp"

namespace robustft {

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::size_t class_count = 10;
  std::string split = "train";
  /// Free-form origin record: file digests, subset seeds, generator settings.
  std::vector<std::string> provenance;

  std::size_t size() const noexcept { return images.size(); }
  void validate() const;
  std::vector<std::size_t> class_histogram() const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarRecordsPerBatch = 10000;

/// Decodes CIFAR-10 binary records (1 label byte + R, G, B planes of 32x32).
LabeledDataset decode_cifar10_records(const std::string& bytes, const std::string& source, const std::string& split);

/// Loads data_batch_1..5.bin and test_batch.bin from `dir`.
std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::string& dir);
/// True when every CIFAR-10 batch file exists under `dir`.
bool cifar10_available(const std::string& dir);

/// Class-balanced deterministic subset with exactly `per_class` images per class.
LabeledDataset subset(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed);

/// Procedural 32x32 RGB classes: each class owns a stripe orientation and a
/// base hue, with per-image jitter in phase, frequency, contrast and noise.
LabeledDataset synth_dataset(std::size_t n_per_class, std::size_t classes, std::uint64_t seed,
                             const std::string& split = "train");

/// FNV-1a 64-bit digest, hex encoded; used for provenance records.
std::string digest_hex(const std::string& bytes);

}  // namespace robustft
