#pragma once

#include <string>
#include <vector>

#include "robustft/image.hpp"
#include "robustft/trainer.hpp"

namespace robustft {

/// Accuracy table: evaluation conditions x models. Column 0 is the baseline.
struct MetricGrid {
  std::vector<std::string> conditions;
  std::vector<std::string> models;
  std::vector<std::vector<double>> cells;  // [condition][model], accuracy in [0,1]

  /// Clean, B+, B-, GB, GN, SAP, S+, S-, Combined+, Combined-.
  static std::vector<std::string> standard_conditions();

  MetricGrid() = default;
  MetricGrid(std::vector<std::string> conditions, std::vector<std::string> models);

  double& at(const std::string& condition, const std::string& model);
  double at(const std::string& condition, const std::string& model) const;

  /// Mean of (model - baseline) over every row, Clean included; this is the
  /// "Average improvement" row of the published tables.
  double average_improvement(const std::string& model) const;
  /// Same mean restricted to the augmented rows (Clean excluded).
  double average_augmented_improvement(const std::string& model) const;

  /// Percentages with two decimals. CSV holds exactly one row per condition.
  std::string to_csv() const;
  std::string to_json() const;
  /// Human-readable table with an "Average improvement" row.
  std::string to_markdown() const;
  static MetricGrid from_csv(const std::string& text);
  static MetricGrid from_json(const std::string& text);
};

/// Accuracy rounded to a percentage with two decimals (0.89816 -> 89.82).
double to_percent2(double accuracy);

/// Column order of training-curve outputs: Clean then the seven augmentations.
std::vector<std::string> curve_series();
/// One row per epoch; header "epoch,Clean,B+,...". Values are percentages.
std::string curves_csv(const RunManifest& manifest);
/// Line chart of the same series.
std::string curves_svg(const RunManifest& manifest, const std::string& title);

Image read_png(const std::string& path);
/// 8-bit RGB, round(v * 255) clamped to [0, 255].
void write_png(const std::string& path, const Image& img);

}  // namespace robustft
