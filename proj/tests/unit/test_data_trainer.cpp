#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "robustft/calibration.hpp"
#include "robustft/dataset.hpp"
#include "robustft/errors.hpp"
#include "robustft/kv.hpp"
#include "robustft/trainer.hpp"

using namespace robustft;
namespace fs = std::filesystem;

namespace {

std::string cifar_fixture() {
  // Record 0: label 7, R = i, G = 255 - i, B = 2i (mod 256). Record 1: label 2, all 128.
  std::string bytes(2 * kCifarRecordBytes, '\0');
  bytes[0] = 7;
  for (std::size_t i = 0; i < 1024; ++i) {
    bytes[1 + i] = static_cast<char>(i % 256);
    bytes[1 + 1024 + i] = static_cast<char>(255 - i % 256);
    bytes[1 + 2048 + i] = static_cast<char>((2 * i) % 256);
  }
  bytes[kCifarRecordBytes] = 2;
  for (std::size_t i = 1; i < kCifarRecordBytes; ++i) bytes[kCifarRecordBytes + i] = static_cast<char>(128);
  return bytes;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("robustft_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrainConfig tiny_finetune(const PresetTable& presets) {
  TrainConfig c = TrainConfig::finetune_defaults();
  c.epochs = 2;
  c.schedule = {{1e-3, 2}};
  c.batch_size = 16;
  c.seed = 3;
  c.strategy = StrategyConfig::combined(presets, "cifar10");
  c.eval_specs = {presets.get("cifar10", AugmentKind::GaussianNoise), presets.get("cifar10", AugmentKind::BrightnessPlus)};
  return c;
}

ArchitectureDescriptor small_arch() {
  ArchitectureDescriptor d;
  d.blocks = {{4, 1}, {8, 1}};
  d.dense_widths = {16};
  return d;
}

}  // namespace

TEST(Cifar, FixtureDecodesByteByByte) {
  const auto ds = decode_cifar10_records(cifar_fixture(), "fixture", "train");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels[0], 7);
  EXPECT_EQ(ds.labels[1], 2);
  const Image& a = ds.images[0];
  EXPECT_EQ(a.height, 32u);
  EXPECT_EQ(a.at(0, 5, 0), 5 / 255.0);
  EXPECT_EQ(a.at(0, 5, 1), 250 / 255.0);
  EXPECT_EQ(a.at(1, 3, 2), ((2 * 35) % 256) / 255.0);  // pixel index 35
  EXPECT_EQ(ds.images[1].at(31, 31, 1), 128 / 255.0);
  EXPECT_TRUE(a.in_unit_range());
  EXPECT_NE(ds.provenance.front().find("fnv1a64="), std::string::npos);
}

TEST(Cifar, MalformedInputsAreFormatErrors) {
  std::string bytes = cifar_fixture();
  EXPECT_THROW(decode_cifar10_records(bytes.substr(0, 100), "x", "train"), FormatError);
  bytes[0] = 12;
  EXPECT_THROW(decode_cifar10_records(bytes, "x", "train"), FormatError);
  const fs::path dir = temp_dir("cifar_missing");
  EXPECT_FALSE(cifar10_available(dir.string()));
  try {
    load_cifar10(dir.string());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("data_batch_1.bin"), std::string::npos);
  }
}

TEST(Cifar, LoadsAllBatchesFromDirectory) {
  const fs::path dir = temp_dir("cifar_full");
  // Every batch must hold 10000 records; repeat the fixture.
  std::string batch;
  const std::string fx = cifar_fixture();
  for (std::size_t i = 0; i < kCifarRecordsPerBatch / 2; ++i) batch += fx;
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                           "data_batch_5.bin", "test_batch.bin"}) {
    std::ofstream(dir / name, std::ios::binary) << batch;
  }
  EXPECT_TRUE(cifar10_available(dir.string()));
  const auto [train, val] = load_cifar10(dir.string());
  EXPECT_EQ(train.size(), 50000u);
  EXPECT_EQ(val.size(), 10000u);
  const auto [train2, val2] = load_cifar10(dir.string());
  EXPECT_EQ(train2.images[123], train.images[123]);
  fs::remove_all(dir);
}

TEST(Subset, ExactBalanceAndSeeding) {
  const auto ds = synth_dataset(60, 10, 1);
  const auto a = subset(ds, 50, 7);
  EXPECT_EQ(a.size(), 500u);
  for (std::size_t c : a.class_histogram()) EXPECT_EQ(c, 50u);
  EXPECT_EQ(subset(ds, 50, 7).images, a.images);
  EXPECT_NE(subset(ds, 50, 8).images, a.images);
  EXPECT_THROW(subset(ds, 61, 7), ContractError);
}

TEST(Synthetic, SizesRangeAndDeterminism) {
  const auto ds = synth_dataset(7, 4, 5, "val");
  EXPECT_EQ(ds.size(), 28u);
  EXPECT_EQ(ds.class_count, 4u);
  for (std::size_t c : ds.class_histogram()) EXPECT_EQ(c, 7u);
  for (const auto& img : ds.images) EXPECT_TRUE(img.in_unit_range());
  EXPECT_EQ(synth_dataset(7, 4, 5, "val").images, ds.images);
  ds.validate();
}

TEST(Synthetic, DeskCnnLearnsItQuickly) {
  const auto train = synth_dataset(40, 10, 11, "train");
  const auto val = synth_dataset(20, 10, 12, "val");
  TrainConfig cfg;
  cfg.epochs = 5;
  // 1e-2 with momentum 0.9 diverges at batch 16 on this unnormalized net.
  cfg.schedule = {{1e-3, 5}};
  cfg.batch_size = 16;
  cfg.seed = 1;
  const auto res = train_baseline(Model::create(ArchitectureDescriptor{}, 1), train, val, cfg);
  EXPECT_GT(res.manifest.final_metrics.at("clean"), 0.95);
}

TEST(Optimizer, MomentumRecursion) {
  Tensor theta({2}, std::vector<double>{1.0, -1.0});
  Tensor v({2});
  const Tensor g({2}, std::vector<double>{2.0, 4.0});
  Tensor plain = theta;
  Tensor pv({2});
  sgd_momentum_step(plain, g, pv, 0.1, 0.0);
  EXPECT_NEAR(plain[0], 1.0 - 0.2, 1e-15);

  sgd_momentum_step(theta, g, v, 0.1, 0.9);
  EXPECT_NEAR(theta[0], 1.0 - 0.1 * 2.0, 1e-15);
  sgd_momentum_step(theta, g, v, 0.1, 0.9);
  EXPECT_NEAR(theta[0], 1.0 - 0.1 * 2.0 - 0.19 * 2.0, 1e-15);

  Tensor still({2}, 3.0), sv({2});
  sgd_momentum_step(still, Tensor({2}), sv, 0.1, 0.9);
  sgd_momentum_step(still, Tensor({2}), sv, 0.1, 0.9);
  EXPECT_EQ(still, Tensor({2}, 3.0));
  EXPECT_THROW(sgd_momentum_step(still, Tensor({3}), sv, 0.1, 0.9), ContractError);
}

TEST(TrainConfig, PaperScheduleBoundaries) {
  const TrainConfig c = TrainConfig::baseline_defaults();
  EXPECT_EQ(c.epochs, 40);
  EXPECT_EQ(c.rate_at(0), 1e-2);
  EXPECT_EQ(c.rate_at(19), 1e-2);
  EXPECT_EQ(c.rate_at(20), 1e-4);
  EXPECT_EQ(c.rate_at(30), 1e-6);
  EXPECT_EQ(c.momentum, 0.9);
  EXPECT_EQ(c.batch_size, 64u);
  const TrainConfig f = TrainConfig::finetune_defaults();
  EXPECT_EQ(f.epochs, 30);
  EXPECT_EQ(f.rate_at(29), 1e-3);
  TrainConfig bad = c;
  bad.epochs = 39;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = c;
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(Trainer, BaselineImprovesAndIsDeterministic) {
  const auto train = synth_dataset(12, 10, 1);
  const auto val = synth_dataset(6, 10, 2, "val");
  const Model init = Model::create(small_arch(), 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.schedule = {{1e-2, 1}};
  cfg.batch_size = 8;
  const double before = eval_accuracy(ModelClassifier(init), val, std::nullopt);
  const auto a = train_baseline(init, train, val, cfg);
  const auto b = train_baseline(init, train, val, cfg);
  EXPECT_GT(a.manifest.final_metrics.at("clean"), before);
  EXPECT_EQ(save_model(a.model), save_model(b.model));
  EXPECT_EQ(a.manifest.to_json(), b.manifest.to_json());
  TrainConfig wrong = cfg;
  wrong.stage = Stage::Finetune;
  EXPECT_THROW(train_baseline(init, train, val, wrong), ContractError);
}

TEST(Trainer, FinetuneLogsCurvesFollowsParityAndWritesArtifacts) {
  const PresetTable presets = PresetTable::builtin();
  const auto train = synth_dataset(4, 10, 1);
  const auto val = synth_dataset(2, 10, 2, "val");
  const Model base = Model::create(small_arch(), 4);
  const fs::path dir = temp_dir("finetune");
  TrainConfig cfg = tiny_finetune(presets);
  cfg.metrics_csv = (dir / "metrics.csv").string();
  cfg.checkpoint_every = 1;
  cfg.checkpoint_dir = (dir / "ckpt").string();
  const auto res = finetune(base, train, val, cfg);
  ASSERT_EQ(res.manifest.epochs.size(), 2u);
  EXPECT_EQ(res.manifest.epochs[0].set_label, "Combined+");
  EXPECT_EQ(res.manifest.epochs[1].set_label, "Combined-");
  EXPECT_EQ(res.manifest.epochs[0].augmented_accuracy.size(), 2u);
  EXPECT_EQ(res.manifest.parity, "combined_plus_on_even");
  EXPECT_EQ(res.manifest.composition_order, composition_order());
  EXPECT_EQ(res.manifest.method, "fma");
  EXPECT_TRUE(fs::exists(dir / "ckpt" / "epoch_001.snap"));
  EXPECT_TRUE(fs::exists(dir / "ckpt" / "epoch_002.snap"));
  const std::string csv = read_text_file(cfg.metrics_csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  const auto back = RunManifest::from_json(res.manifest.to_json());
  EXPECT_EQ(back.to_json(), res.manifest.to_json());
  EXPECT_THROW(RunManifest::from_json("{\"format\": 3"), FormatError);
  EXPECT_THROW(RunManifest::from_json("{}"), FormatError);
  fs::remove_all(dir);
}

TEST(Trainer, ZeroGammaEqualsCleanOnlyFinetuning) {
  const PresetTable presets = PresetTable::builtin();
  const auto train = synth_dataset(3, 10, 1);
  const auto val = synth_dataset(1, 10, 2, "val");
  const Model base = Model::create(small_arch(), 4);
  TrainConfig fma = tiny_finetune(presets);
  fma.loss.gamma = 0.0;
  const auto a = finetune(base, train, val, fma);
  for (const auto& e : a.manifest.epochs) EXPECT_EQ(e.loss, e.task_loss);
}

TEST(Trainer, GridSearchShapesAndSinglePoint) {
  const PresetTable presets = PresetTable::builtin();
  const auto train = synth_dataset(3, 10, 1);
  const auto val = synth_dataset(1, 10, 2, "val");
  const Model base = Model::create(small_arch(), 4);
  TrainConfig cfg = tiny_finetune(presets);
  cfg.epochs = 1;
  cfg.schedule = {{1e-3, 1}};
  const std::vector<double> one{0.5};
  const auto r1 = grid_search_gamma(base, train, val, one, cfg, 0.0);
  EXPECT_EQ(r1.best, 0.5);
  EXPECT_EQ(r1.rows.size(), 1u);
  const std::vector<double> three{0.0, 0.1, 1.0};
  const auto r3 = grid_search_gamma(base, train, val, three, cfg, 2.0);  // unreachable clean target
  EXPECT_EQ(r3.rows.size(), 3u);
  EXPECT_TRUE(r3.constraint_violated);
  EXPECT_THROW(grid_search_gamma(base, train, val, std::span<const double>{}, cfg, 0.0), ContractError);
}

TEST(Trainer, NonFiniteLossIsANumericError) {
  const PresetTable presets = PresetTable::builtin();
  const auto train = synth_dataset(2, 10, 1);
  const auto val = synth_dataset(1, 10, 2, "val");
  Model base = Model::create(small_arch(), 4);
  for (auto& [name, v] : base.parameters()) {
    if (name == "classifier.weight") v->value.fill(1e200);
  }
  TrainConfig cfg = TrainConfig::baseline_defaults();
  cfg.epochs = 1;
  cfg.schedule = {{1e-2, 1}};
  EXPECT_THROW(train_baseline(base, train, val, cfg), NumericError);
}
