#include <gtest/gtest.h>

#include <filesystem>
#include <regex>

#include "commands.hpp"
#include "json.hpp"
#include "robustft/errors.hpp"
#include "robustft/kv.hpp"
#include "robustft/report.hpp"

using namespace robustft;
namespace fs = std::filesystem;

namespace {

// Published CIFAR-10 accuracies (Clean and augmented rows), in percent.
MetricGrid published_table3() {
  MetricGrid g(MetricGrid::standard_conditions(), {"Baseline", "AT/CA", "ST/CA", "FMA/CA"});
  const double rows[10][4] = {
      {89.82, 88.14, 89.91, 88.97},  // Clean
      {80.13, 75.92, 82.32, 82.23},  // B+
      {80.13, 74.40, 81.14, 81.84},  // B-
      {81.06, 80.31, 83.71, 85.02},  // GB
      {81.17, 87.34, 86.53, 86.94},  // GN
      {80.73, 86.94, 85.72, 86.58},  // SAP
      {80.47, 73.71, 84.38, 83.74},  // S+
      {84.03, 82.03, 84.44, 83.70},  // S-
      {44.22, 54.62, 74.08, 73.50},  // Combined+
      {29.87, 48.10, 67.98, 68.59},  // Combined-
  };
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 4; ++c) g.cells[r][c] = rows[r][c] / 100.0;
  return g;
}

RunManifest fake_manifest(int epochs) {
  RunManifest m;
  m.stage = "finetune";
  m.method = "FMA";
  m.strategy = "CA";
  for (int e = 0; e < epochs; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.clean_accuracy = 0.5 + 0.01 * e;
    for (const auto& s : curve_series()) {
      if (s != "Clean") r.augmented_accuracy[s] = 0.4 + 0.015 * e;
    }
    m.epochs.push_back(r);
  }
  return m;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("robustft_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(MetricGrid, AverageImprovementReproducesPublishedRow) {
  const MetricGrid g = published_table3();
  // Published "Average improvement": 1.98, 8.86, 8.94 (the table truncates
  // rather than rounds the last digit, hence the 0.01 band).
  EXPECT_NEAR(g.average_improvement("AT/CA") * 100, 1.98, 0.01);
  EXPECT_NEAR(g.average_improvement("ST/CA") * 100, 8.86, 0.01);
  EXPECT_NEAR(g.average_improvement("FMA/CA") * 100, 8.94, 0.01);
  // The augmented-only mean does not reproduce it.
  EXPECT_GT(std::abs(g.average_augmented_improvement("FMA/CA") * 100 - 8.94), 0.5);
  EXPECT_EQ(g.average_improvement("Baseline"), 0.0);
}

TEST(MetricGrid, CsvAndJsonAreValueIdentical) {
  const MetricGrid g = published_table3();
  const std::string csv = g.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "condition,Baseline,AT/CA,ST/CA,FMA/CA");
  EXPECT_NE(csv.find("Clean,89.82,88.14,89.91,88.97"), std::string::npos);
  const MetricGrid a = MetricGrid::from_csv(csv);
  const MetricGrid b = MetricGrid::from_json(g.to_json());
  EXPECT_EQ(a.conditions, b.conditions);
  EXPECT_EQ(a.models, b.models);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(to_percent2(a.cells[r][c]), to_percent2(b.cells[r][c]));
  const auto j = nlohmann::json::parse(g.to_json());
  EXPECT_EQ(j["average_improvement"]["FMA/CA"].get<double>(), 8.95);
  EXPECT_NE(g.to_markdown().find("Average improvement"), std::string::npos);
  EXPECT_THROW(MetricGrid::from_json("[1,2"), FormatError);
  EXPECT_THROW(MetricGrid::from_csv("nope\n"), FormatError);
}

TEST(MetricGrid, PercentRounding) {
  EXPECT_EQ(to_percent2(0.89816), 89.82);
  EXPECT_EQ(to_percent2(1.0), 100.0);
  MetricGrid g(MetricGrid::standard_conditions(), {"Baseline"});
  EXPECT_EQ(g.conditions.size(), 10u);
  EXPECT_THROW(g.at("Rain", "Baseline"), ContractError);
}

TEST(Curves, CsvRowsAndSeries) {
  const RunManifest m = fake_manifest(5);
  EXPECT_EQ(curve_series().size(), 8u);
  const std::string csv = curves_csv(m);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,Clean,B+,B-,GB,GN,SAP,S+,S-");
  RunManifest broken = m;
  broken.epochs[2].augmented_accuracy.erase("GN");
  EXPECT_THROW(curves_csv(broken), FormatError);
}

TEST(Curves, SvgIsWellFormedAndDeterministic) {
  const RunManifest m = fake_manifest(4);
  const std::string svg = curves_svg(m, "FMA/CA <test> & more");
  EXPECT_EQ(svg, curves_svg(m, "FMA/CA <test> & more"));
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '<') - std::count(svg.begin(), svg.end(), '>'), 0);
  const auto count = [&](const std::string& s) {
    std::size_t n = 0;
    for (auto p = svg.find(s); p != std::string::npos; p = svg.find(s, p + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("<polyline"), 8u);
  EXPECT_EQ(count("<svg"), 1u);
  EXPECT_EQ(count("</svg>"), 1u);
  EXPECT_NE(svg.find("&lt;test&gt; &amp; more"), std::string::npos);
}

TEST(Png, RoundTripQuantizesToEightBits) {
  const fs::path dir = temp_dir("png");
  Image img(3, 4, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i) / 35.0;
  img.pixels[0] = 1.7;  // clamped
  write_png((dir / "a.png").string(), img);
  const Image back = read_png((dir / "a.png").string());
  ASSERT_EQ(back.height, 3u);
  ASSERT_EQ(back.width, 4u);
  EXPECT_EQ(back.pixels[0], 1.0);
  for (std::size_t i = 1; i < img.pixels.size(); ++i) {
    EXPECT_EQ(back.pixels[i], std::round(img.pixels[i] * 255.0) / 255.0);
  }
  EXPECT_THROW(read_png((dir / "missing.png").string()), FormatError);
  write_file_atomic((dir / "bad.png").string(), "not a png");
  EXPECT_THROW(read_png((dir / "bad.png").string()), FormatError);
  fs::remove_all(dir);
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(cli::run({"robustft"}), cli::kUsage);
  EXPECT_EQ(cli::run({"robustft", "finetune", "--method", "mixup"}), cli::kUsage);
  EXPECT_EQ(cli::run({"robustft", "--bogus", "eval"}), cli::kUsage);
  EXPECT_EQ(cli::run({"robustft", "--help"}), cli::kOk);
}

TEST(Cli, MissingArtifactsExitWithTwoAndNameThePath) {
  const fs::path dir = temp_dir("missing");
  testing::internal::CaptureStderr();
  const int code = cli::run({"robustft", "--synthetic", "--out-dir", dir.string(), "-q", "finetune", "--builtin-presets"});
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_EQ(code, cli::kDataError);
  EXPECT_NE(err.find("baseline.snap"), std::string::npos) << err;
  EXPECT_EQ(cli::run({"robustft", "--data-dir", (dir / "none").string(), "--out-dir", dir.string(), "-q",
                      "train-baseline"}),
            cli::kDataError);
  fs::remove_all(dir);
}

TEST(Cli, SyntheticPipelineProducesEveryArtifact) {
  const fs::path dir = temp_dir("pipeline");
  const std::string arch = (dir / "arch.ini").string();
  ArchitectureDescriptor d;
  d.blocks = {{4, 1}, {8, 1}};
  d.dense_widths = {16};
  write_file_atomic(arch, d.to_text());
  const std::vector<std::string> common{"robustft", "--synthetic", "--train-per-class", "4", "--val-per-class", "3",
                                        "--out-dir", dir.string(), "--arch", arch, "-q"};
  auto run = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = common;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli::run(args);
  };
  ASSERT_EQ(run({"train-baseline", "--epochs", "2"}), cli::kOk);
  ASSERT_EQ(run({"run-grid", "--methods", "at,st,fma", "--strategy", "ca", "--epochs", "1", "--builtin-presets"}),
            cli::kOk);
  const MetricGrid grid = MetricGrid::from_csv(read_text_file((dir / "grid.csv").string()));
  EXPECT_EQ(grid.conditions.size(), 10u);
  EXPECT_EQ(grid.models, (std::vector<std::string>{"Baseline", "AT/CA", "ST/CA", "FMA/CA"}));
  for (const char* run_name : {"at_ca", "st_ca", "fma_ca"}) {
    EXPECT_TRUE(fs::exists(dir / "runs" / run_name / "manifest.json")) << run_name;
    EXPECT_TRUE(fs::exists(dir / "runs" / run_name / "model.snap")) << run_name;
    EXPECT_TRUE(fs::exists(dir / "runs" / run_name / "metrics.csv")) << run_name;
  }
  EXPECT_TRUE(fs::exists(dir / "grid.json"));
  EXPECT_TRUE(fs::exists(dir / "grid.md"));

  ASSERT_EQ(run({"report", "--samples", "1"}), cli::kOk);
  const std::string svg1 = read_text_file((dir / "report" / "fma_ca" / "curves.svg").string());
  ASSERT_EQ(run({"report", "--samples", "1"}), cli::kOk);
  EXPECT_EQ(read_text_file((dir / "report" / "fma_ca" / "curves.svg").string()), svg1);
  EXPECT_TRUE(fs::exists(dir / "report" / "samples" / "0_combined_plus.png"));

  const std::string in = (dir / "report" / "samples" / "0_clean.png").string();
  const std::string out = (dir / "aug.png").string();
  EXPECT_EQ(run({"augment", "--input", in, "--output", out, "--spec", "B+", "--builtin-presets"}), cli::kOk);
  const Image a = read_png(in), b = read_png(out);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) EXPECT_GE(b.pixels[i], a.pixels[i]);

  write_file_atomic((dir / "runs" / "fma_ca" / "manifest.json").string(), "{ broken");
  EXPECT_EQ(run({"report", "--samples", "0"}), cli::kDataError);
  fs::remove_all(dir);
}
