#include "robustft/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "robustft/augment.hpp"
#include "robustft/errors.hpp"
#include "robustft/kv.hpp"
#include "robustft/random.hpp"

namespace robustft {

namespace {
const char* kTrainFiles[] = {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                             "data_batch_5.bin"};
const char* kTestFile = "test_batch.bin";

std::string read_batch_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("missing CIFAR-10 batch file '" + path.string() + "' (expected " +
                      std::to_string(kCifarRecordBytes * kCifarRecordsPerBatch) + " bytes)");
  }
  std::ostringstream os;
  os << in.rdbuf();
  std::string bytes = os.str();
  if (bytes.size() != kCifarRecordBytes * kCifarRecordsPerBatch) {
    throw FormatError("CIFAR-10 batch file '" + path.string() + "' has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(kCifarRecordBytes * kCifarRecordsPerBatch));
  }
  return bytes;
}
}  // namespace

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) {
    throw ContractError("dataset has " + std::to_string(images.size()) + " images but " + std::to_string(labels.size()) +
                        " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw ContractError("dataset label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                          " outside [0," + std::to_string(class_count) + ")");
    }
  }
}

std::vector<std::size_t> LabeledDataset::class_histogram() const {
  std::vector<std::size_t> h(class_count, 0);
  for (int y : labels) ++h[static_cast<std::size_t>(y)];
  return h;
}

std::string digest_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LabeledDataset decode_cifar10_records(const std::string& bytes, const std::string& source, const std::string& split) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("'" + source + "' size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecordBytes) + "-byte records");
  }
  LabeledDataset ds;
  ds.split = split;
  ds.class_count = 10;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data()) + r * kCifarRecordBytes;
    if (rec[0] >= 10) {
      throw FormatError("'" + source + "' record " + std::to_string(r) + " has label " + std::to_string(rec[0]),
                        r * kCifarRecordBytes);
    }
    Image img(32, 32, 3);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < 32; ++y) {
        for (std::size_t x = 0; x < 32; ++x) img.at(y, x, c) = rec[1 + c * 1024 + y * 32 + x] / 255.0;
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(rec[0]);
  }
  ds.provenance.push_back(source + " fnv1a64=" + digest_hex(bytes));
  return ds;
}

bool cifar10_available(const std::string& dir) {
  namespace fs = std::filesystem;
  for (const char* f : kTrainFiles) {
    if (!fs::exists(fs::path(dir) / f)) return false;
  }
  return fs::exists(fs::path(dir) / kTestFile);
}

std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  LabeledDataset train;
  train.split = "train";
  for (const char* f : kTrainFiles) {
    const auto path = fs::path(dir) / f;
    auto part = decode_cifar10_records(read_batch_file(path), path.string(), "train");
    for (auto& img : part.images) train.images.push_back(std::move(img));
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
    train.provenance.insert(train.provenance.end(), part.provenance.begin(), part.provenance.end());
  }
  const auto test_path = fs::path(dir) / kTestFile;
  LabeledDataset val = decode_cifar10_records(read_batch_file(test_path), test_path.string(), "val");
  return {std::move(train), std::move(val)};
}

LabeledDataset subset(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed) {
  ds.validate();
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (std::size_t k = 0; k < ds.class_count; ++k) {
    if (by_class[k].size() < per_class) {
      throw ContractError("subset: class " + std::to_string(k) + " has " + std::to_string(by_class[k].size()) +
                          " members, " + std::to_string(per_class) + " requested");
    }
  }
  const RandomStream root(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(per_class * ds.class_count);
  for (std::size_t k = 0; k < ds.class_count; ++k) {
    RandomStream rng = root.split(k);
    const auto perm = permutation(by_class[k].size(), rng);
    for (std::size_t j = 0; j < per_class; ++j) chosen.push_back(by_class[k][perm[j]]);
  }
  // Interleave classes in a seeded order so consumers need not reshuffle.
  RandomStream order_rng = root.split(ds.class_count);
  const auto order = permutation(chosen.size(), order_rng);

  LabeledDataset out;
  out.class_count = ds.class_count;
  out.split = ds.split;
  out.provenance = ds.provenance;
  out.provenance.push_back("subset per_class=" + std::to_string(per_class) + " seed=" + std::to_string(seed));
  out.images.reserve(chosen.size());
  for (std::size_t i : order) {
    out.images.push_back(ds.images[chosen[i]]);
    out.labels.push_back(ds.labels[chosen[i]]);
  }
  return out;
}

LabeledDataset synth_dataset(std::size_t n_per_class, std::size_t classes, std::uint64_t seed, const std::string& split) {
  if (classes < 2) throw ContractError("synth_dataset: need at least 2 classes");
  constexpr std::size_t kSide = 32;
  const RandomStream root(seed);
  LabeledDataset ds;
  ds.class_count = classes;
  ds.split = split;
  ds.provenance.push_back("synthetic n_per_class=" + std::to_string(n_per_class) + " classes=" +
                          std::to_string(classes) + " seed=" + std::to_string(seed));
  const std::size_t total = n_per_class * classes;
  ds.images.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t k = i % classes;
    RandomStream rng = root.split(i);
    const double angle = std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes) + 0.05 * (rng.uniform() - 0.5);
    const double hue = std::fmod(static_cast<double>(k) / static_cast<double>(classes) + 0.03 * (rng.uniform() - 0.5) + 1.0, 1.0);
    const double freq = 2.0 + 2.0 * rng.uniform();
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const double contrast = 0.5 + 0.5 * rng.uniform();
    const double sat = 0.5 + 0.3 * rng.uniform();
    const double ca = std::cos(angle), sa = std::sin(angle);
    Image img(kSide, kSide, 3);
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        const double u = (static_cast<double>(x) * ca + static_cast<double>(y) * sa) / static_cast<double>(kSide);
        const double t = 0.5 + 0.5 * contrast * std::sin(2.0 * std::numbers::pi * freq * u + phase);
        const auto rgb = hsl_to_rgb(hue, sat, 0.25 + 0.5 * t);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = rgb[c] + 0.03 * rng.normal();
          img.at(y, x, c) = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(static_cast<int>(k));
  }
  return ds;
}

}  // namespace robustft
