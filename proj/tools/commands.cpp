#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "robustft/augment.hpp"
#include "robustft/calibration.hpp"
#include "robustft/dataset.hpp"
#include "robustft/errors.hpp"
#include "robustft/kv.hpp"
#include "robustft/losses.hpp"
#include "robustft/model.hpp"
#include "robustft/report.hpp"
#include "robustft/schedule.hpp"
#include "robustft/trainer.hpp"

namespace robustft::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Global {
  std::uint64_t seed = 0;
  std::string data_dir = "data/cifar-10-batches-bin";
  std::string out_dir = "out";
  std::string dataset = "cifar10";
  std::string arch_file;
  bool synthetic = false;
  std::size_t train_per_class = 500;
  std::size_t val_per_class = 100;
  bool quiet = false;
};

struct Data {
  LabeledDataset train;
  LabeledDataset val;
};

// Raised for absent inputs so the message can name the artifact to produce.
struct MissingArtifact : FormatError {
  using FormatError::FormatError;
};

std::string out_path(const Global& g, const std::string& rel) { return (fs::path(g.out_dir) / rel).string(); }

void require_file(const std::string& path, const std::string& what, const std::string& hint) {
  if (!fs::exists(path)) throw MissingArtifact("missing " + what + ": " + path + " (" + hint + ")");
}

void say(const Global& g, const std::string& line) {
  if (!g.quiet) std::cerr << line << '\n';
}

std::string pct(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", to_percent2(acc));
  return buf;
}

Data load_data(const Global& g) {
  Data d;
  if (g.synthetic) {
    d.train = synth_dataset(g.train_per_class, 10, g.seed, "train");
    d.val = synth_dataset(g.val_per_class, 10, g.seed ^ 0x76616cULL, "val");
    return d;
  }
  if (!cifar10_available(g.data_dir)) {
    throw MissingArtifact("missing CIFAR-10 binary batches under " + g.data_dir +
                          " (expected data_batch_1..5.bin and test_batch.bin; set --data-dir or ROBUSTFT_CIFAR10_DIR, "
                          "or pass --synthetic)");
  }
  auto [train, test] = load_cifar10(g.data_dir);
  d.train = subset(train, g.train_per_class, g.seed);
  d.val = subset(test, g.val_per_class, g.seed + 1);
  d.val.split = "val";
  return d;
}

ArchitectureDescriptor architecture(const Global& g) {
  if (g.arch_file.empty()) return ArchitectureDescriptor{};
  return ArchitectureDescriptor::parse(read_text_file(g.arch_file));
}

Model load_snapshot(const std::string& path, const std::string& hint) {
  require_file(path, "model snapshot", hint);
  return load_model_file(path);
}

PresetTable load_presets(const std::string& path, bool builtin) {
  if (builtin) return PresetTable::builtin();
  require_file(path, "augmentation manifest", "run `robustft calibrate` or pass --builtin-presets");
  return PresetTable::load(path);
}

std::vector<AugmentationSpec> individual_specs(const PresetTable& presets, const std::string& dataset) {
  std::vector<AugmentationSpec> out;
  for (AugmentKind k : kAllAugmentKinds) out.push_back(presets.get(dataset, k));
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "1e-2:20,1e-4:10" -> stages.
std::vector<RateStage> parse_schedule(const std::string& text) {
  std::vector<RateStage> out;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ParameterError("schedule entries look like RATE:EPOCHS, got '" + item + "'");
    RateStage s;
    s.rate = parse_double(item.substr(0, colon));
    s.epochs = static_cast<int>(parse_double(item.substr(colon + 1)));
    out.push_back(s);
  }
  if (out.empty()) throw ParameterError("empty learning-rate schedule");
  return out;
}

// Paper schedule (1e-2, 1e-4, 1e-6) with its 2:1:1 epoch split, stretched to `epochs`.
std::vector<RateStage> scaled_schedule(int epochs) {
  if (epochs == 40) return TrainConfig::baseline_defaults().schedule;
  const int a = std::max(1, static_cast<int>(std::lround(epochs / 2.0)));
  const int b = std::max(0, std::min(epochs - a, epochs / 4));
  const int c = epochs - a - b;
  std::vector<RateStage> out{{1e-2, a}};
  if (b > 0) out.push_back({1e-4, b});
  if (c > 0) out.push_back({1e-6, c});
  return out;
}

std::function<void(const EpochRecord&)> progress(const Global& g, std::string tag, int total) {
  if (g.quiet) return {};
  return [tag = std::move(tag), total](const EpochRecord& r) {
    std::ostringstream os;
    os << tag << " epoch " << r.epoch + 1 << '/' << total << " rate=" << format_double(r.rate)
       << " loss=" << format_double(std::round(r.loss * 1e5) / 1e5) << " clean=" << pct(r.clean_accuracy);
    if (!r.set_label.empty()) os << " set=" << r.set_label;
    std::cerr << os.str() << '\n';
  };
}

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

// ---------------------------------------------------------------- baseline

struct BaselineOpts {
  int epochs = 40;
  std::string schedule;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  int checkpoint_every = 0;
  std::string output;  // default <out>/baseline.snap
};

std::string baseline_path(const Global& g, const BaselineOpts& o) {
  return o.output.empty() ? out_path(g, "baseline.snap") : o.output;
}

std::string train_baseline_cmd(const Global& g, const BaselineOpts& o, const Data& data) {
  TrainConfig cfg = TrainConfig::baseline_defaults();
  cfg.epochs = o.epochs;
  cfg.schedule = o.schedule.empty() ? scaled_schedule(o.epochs) : parse_schedule(o.schedule);
  cfg.batch_size = o.batch_size;
  cfg.momentum = o.momentum;
  cfg.seed = g.seed;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.checkpoint_dir = out_path(g, "baseline/checkpoints");
  cfg.metrics_csv = out_path(g, "baseline/metrics.csv");
  cfg.on_epoch = progress(g, "baseline", o.epochs);
  fs::create_directories(out_path(g, "baseline"));
  if (fs::exists(cfg.metrics_csv)) fs::remove(cfg.metrics_csv);

  const Model init = Model::create(architecture(g), g.seed);
  const TrainResult res = train_baseline(init, data.train, data.val, cfg);
  const std::string path = baseline_path(g, o);
  save_model_file(res.model, path);
  res.manifest.save(out_path(g, "baseline/manifest.json"));
  say(g, "baseline: best clean accuracy " + pct(res.manifest.final_metrics.at("clean")) + " -> " + path);
  return path;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOpts {
  std::string baseline;
  std::string kinds = "B+,B-,GB,GN,SAP,S+,S-";
  double target_drop = 0.10;
  double tolerance = 0.005;
  int max_iterations = 30;
  std::string output;  // default <out>/augmentations.ini
};

std::string presets_path(const Global& g, const std::string& given) {
  return given.empty() ? out_path(g, "augmentations.ini") : given;
}

std::string calibrate_cmd(const Global& g, const CalibrateOpts& o, const Data& data) {
  const std::string snap = o.baseline.empty() ? out_path(g, "baseline.snap") : o.baseline;
  const Model model = load_snapshot(snap, "run `robustft train-baseline` first");
  const ModelClassifier clf(model);
  const double clean = eval_accuracy(clf, data.val, std::nullopt);
  say(g, "calibrate: clean validation accuracy " + pct(clean));

  const std::string path = presets_path(g, o.output);
  PresetTable table = fs::exists(path) ? PresetTable::load(path) : PresetTable{};
  json report = json::array();
  for (const auto& name : split_list(o.kinds)) {
    const AugmentKind kind = parse_kind(name);
    CalibrationTask task = CalibrationTask::for_kind(kind);
    task.target_drop = o.target_drop;
    task.tolerance = o.tolerance;
    task.max_iterations = o.max_iterations;
    const CalibrationResult r = calibrate(clf, data.val, task, kEvalSeed, clean);
    table.set(preset_name(g.dataset, kind), r.spec);
    json trace = json::array();
    for (const auto& [k, d] : r.trace) trace.push_back({k, d});
    report.push_back({{"kind", std::string(slug(kind))},
                      {"spec", r.spec.describe()},
                      {"knob", r.knob_value},
                      {"clean_accuracy", r.clean_accuracy},
                      {"augmented_accuracy", r.augmented_accuracy},
                      {"drop", r.drop},
                      {"saturated", r.saturated},
                      {"iterations", r.iterations},
                      {"trace", trace}});
    say(g, "calibrate: " + std::string(short_name(kind)) + " " + r.spec.describe() + " drop " + pct(r.drop) +
               (r.saturated ? " (saturated: range end reached before the target drop)" : ""));
  }
  table.save(path);
  write_text(out_path(g, "calibration.json"), report.dump(2) + "\n");
  say(g, "calibrate: wrote " + path);
  return path;
}

// ---------------------------------------------------------------- finetune

struct FinetuneOpts {
  std::string baseline;
  std::string augmentations;
  bool builtin_presets = false;
  std::string method = "fma";
  std::string strategy = "ca";
  std::string kind = "B+";
  double gamma = 1.0;
  double st_weight = 1.0;
  int epochs = 30;
  double rate = 1e-3;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  std::size_t curve_eval_limit = 0;
  bool per_batch = false;
  int checkpoint_every = 0;
  std::string name;
};

std::string model_label(Method m, Strategy s, std::optional<AugmentKind> kind) {
  std::string label = std::string(method_name(m)) + "/" + std::string(strategy_name(s));
  for (char& c : label) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (kind) label += ":" + std::string(short_name(*kind));
  return label;
}

std::string run_dir_name(Method m, Strategy s, std::optional<AugmentKind> kind) {
  std::string name = std::string(method_name(m)) + "_" + std::string(strategy_name(s));
  if (kind) name += "_" + std::string(slug(*kind));
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

TrainConfig finetune_config(const Global& g, const FinetuneOpts& o, const PresetTable& presets, Method method,
                            Strategy strategy, std::optional<AugmentKind> kind) {
  TrainConfig cfg = TrainConfig::finetune_defaults();
  cfg.epochs = o.epochs;
  cfg.schedule = {{o.rate, o.epochs}};
  cfg.batch_size = o.batch_size;
  cfg.momentum = o.momentum;
  cfg.seed = g.seed;
  cfg.loss.method = method;
  cfg.loss.gamma = o.gamma;
  cfg.loss.st_weight = o.st_weight;
  cfg.strategy = strategy == Strategy::CA ? StrategyConfig::combined(presets, g.dataset)
                                          : StrategyConfig::individual(presets.get(g.dataset, *kind));
  if (o.per_batch) cfg.strategy.alternation = Alternation::PerBatch;
  cfg.eval_specs = individual_specs(presets, g.dataset);
  cfg.curve_eval_limit = o.curve_eval_limit;
  cfg.checkpoint_every = o.checkpoint_every;
  return cfg;
}

struct RunOutput {
  std::string label;
  std::string dir;
  Model model;
};

RunOutput finetune_run(const Global& g, const FinetuneOpts& o, const Model& baseline, const PresetTable& presets,
                       const Data& data, Method method, Strategy strategy, std::optional<AugmentKind> kind) {
  TrainConfig cfg = finetune_config(g, o, presets, method, strategy, kind);
  const std::string name = o.name.empty() ? run_dir_name(method, strategy, kind) : o.name;
  const std::string dir = out_path(g, "runs/" + name);
  fs::create_directories(dir);
  cfg.metrics_csv = dir + "/metrics.csv";
  cfg.checkpoint_dir = dir + "/checkpoints";
  if (fs::exists(cfg.metrics_csv)) fs::remove(cfg.metrics_csv);
  const std::string label = model_label(method, strategy, kind);
  cfg.on_epoch = progress(g, label, o.epochs);

  TrainResult res = finetune(baseline, data.train, data.val, cfg);
  save_model_file(res.model, dir + "/model.snap");
  res.manifest.save(dir + "/manifest.json");
  say(g, label + ": final clean accuracy " + pct(res.manifest.final_metrics.at("clean")) + " -> " + dir);
  return {label, dir, std::move(res.model)};
}

// ---------------------------------------------------------------- evaluation

std::vector<double> evaluate_column(const Model& model, const LabeledDataset& val, const PresetTable& presets,
                                    const std::string& dataset) {
  const ModelClassifier clf(model);
  std::vector<double> col;
  col.push_back(eval_accuracy(clf, val, std::nullopt));
  for (AugmentKind k : kAllAugmentKinds) col.push_back(eval_accuracy(clf, val, presets.get(dataset, k)));
  col.push_back(eval_accuracy(clf, val, combined_plus(presets, dataset)));
  col.push_back(eval_accuracy(clf, val, combined_minus(presets, dataset)));
  return col;
}

MetricGrid build_grid(const std::vector<std::pair<std::string, const Model*>>& models, const LabeledDataset& val,
                      const PresetTable& presets, const std::string& dataset) {
  std::vector<std::string> names;
  for (const auto& [n, m] : models) names.push_back(n);
  MetricGrid grid(MetricGrid::standard_conditions(), names);
  for (std::size_t c = 0; c < models.size(); ++c) {
    const auto col = evaluate_column(*models[c].second, val, presets, dataset);
    for (std::size_t r = 0; r < col.size(); ++r) grid.cells[r][c] = col[r];
  }
  return grid;
}

void write_grid(const Global& g, const MetricGrid& grid, const std::string& stem) {
  write_text(out_path(g, stem + ".csv"), grid.to_csv());
  write_text(out_path(g, stem + ".json"), grid.to_json());
  write_text(out_path(g, stem + ".md"), grid.to_markdown());
}

// ---------------------------------------------------------------- report

struct ReportOpts {
  std::string runs;
  std::string output;
  std::string augmentations;
  bool builtin_presets = false;
  std::size_t samples = 4;
};

void write_samples(const Global& g, const ReportOpts& o, const std::string& dir) {
  const std::string preset_file = presets_path(g, o.augmentations);
  const bool have_file = fs::exists(preset_file);
  if (!o.builtin_presets && !have_file) {
    say(g, "report: no augmentation manifest at " + preset_file + "; sample images use the built-in presets");
  }
  const PresetTable presets = (o.builtin_presets || !have_file) ? PresetTable::builtin() : PresetTable::load(preset_file);
  Data data;
  try {
    data = load_data(g);
  } catch (const MissingArtifact& e) {
    say(g, std::string("report: sample images skipped; ") + e.what());
    return;
  }
  fs::create_directories(dir);
  const std::size_t n = std::min(o.samples, data.val.size());
  const RandomStream root(kEvalSeed);
  for (std::size_t i = 0; i < n; ++i) {
    const Image& img = data.val.images[i];
    const std::string stem = dir + "/" + std::to_string(i) + "_";
    write_png(stem + "clean.png", img);
    for (AugmentKind k : kAllAugmentKinds) {
      RandomStream rng = root.split(i);
      write_png(stem + std::string(slug(k)) + ".png", apply(img, presets.get(g.dataset, k), rng));
    }
    write_png(stem + "combined_plus.png", compose(img, combined_plus(presets, g.dataset), root.split(i)));
    write_png(stem + "combined_minus.png", compose(img, combined_minus(presets, g.dataset), root.split(i)));
  }
  say(g, "report: wrote " + std::to_string(n) + " sample sets to " + dir);
}

int report_cmd(const Global& g, const ReportOpts& o) {
  const std::string runs = o.runs.empty() ? out_path(g, "runs") : o.runs;
  const std::string out = o.output.empty() ? out_path(g, "report") : o.output;
  require_file(runs, "run directory", "run `robustft finetune` or `robustft run-grid` first");
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(runs)) {
    const fs::path m = entry.path() / "manifest.json";
    if (entry.is_directory() && fs::exists(m)) manifests.push_back(m);
  }
  if (manifests.empty()) throw MissingArtifact("missing run manifests: no */manifest.json under " + runs);
  std::sort(manifests.begin(), manifests.end());
  for (const auto& m : manifests) {
    const RunManifest manifest = RunManifest::load(m.string());
    const std::string name = m.parent_path().filename().string();
    const fs::path dir = fs::path(out) / name;
    fs::create_directories(dir);
    write_text((dir / "curves.csv").string(), curves_csv(manifest));
    const std::string title = manifest.method.empty() ? name : manifest.method + "/" + manifest.strategy;
    write_text((dir / "curves.svg").string(), curves_svg(manifest, title + " accuracy during finetuning"));
    say(g, "report: curves for " + name + " -> " + dir.string());
  }
  if (o.samples > 0) write_samples(g, o, (fs::path(out) / "samples").string());
  return kOk;
}

// ---------------------------------------------------------------- augment

struct AugmentOpts {
  std::string input;
  std::string output;
  std::string spec;
  std::string augmentations;
  bool builtin_presets = false;
};

int augment_cmd(const Global& g, const AugmentOpts& o) {
  const PresetTable presets = load_presets(presets_path(g, o.augmentations), o.builtin_presets);
  require_file(o.input, "input image", "pass an existing PNG with --input");
  const Image img = read_png(o.input);
  const RandomStream rng(g.seed);
  Image out;
  if (o.spec == "combined_plus" || o.spec == "Combined+") {
    out = compose(img, combined_plus(presets, g.dataset), rng);
  } else if (o.spec == "combined_minus" || o.spec == "Combined-") {
    out = compose(img, combined_minus(presets, g.dataset), rng);
  } else {
    const AugmentationSpec spec = presets.contains(o.spec) ? presets.get(o.spec) : presets.get(g.dataset, parse_kind(o.spec));
    RandomStream r = rng;
    out = apply(img, spec, r);
  }
  write_png(o.output, out);
  say(g, "augment: " + o.spec + " -> " + o.output);
  return kOk;
}

void add_preset_flags(CLI::App* sub, std::string& file, bool& builtin) {
  sub->add_option("--augmentations", file, "Augmentation manifest (default <out>/augmentations.ini)");
  sub->add_flag("--builtin-presets", builtin, "Use the published CIFAR-10/ImageNet presets instead of a manifest");
}

void add_finetune_flags(CLI::App* sub, FinetuneOpts& o) {
  sub->add_option("--baseline", o.baseline, "Baseline snapshot (default <out>/baseline.snap)");
  add_preset_flags(sub, o.augmentations, o.builtin_presets);
  sub->add_option("--gamma", o.gamma, "FMA weight")->check(CLI::NonNegativeNumber);
  sub->add_option("--st-weight", o.st_weight, "Stability-training weight")->check(CLI::NonNegativeNumber);
  sub->add_option("--epochs", o.epochs, "Finetuning epochs")->check(CLI::PositiveNumber);
  sub->add_option("--rate", o.rate, "Constant learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", o.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  sub->add_option("--momentum", o.momentum, "Momentum coefficient")->check(CLI::Range(0.0, 0.999999));
  sub->add_option("--curve-eval-limit", o.curve_eval_limit, "Validation images used for per-epoch curves (0 = all)");
  sub->add_flag("--per-batch", o.per_batch, "Alternate Combined sets per batch instead of per epoch");
  sub->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval in epochs (0 = off)");
}

int execute(CLI::App& app, int argc, const char* const* argv) {
  Global g;
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value file mirroring the command-line flags; flags override it");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--data-dir", g.data_dir, "Directory holding the CIFAR-10 binary batches")->envname("ROBUSTFT_CIFAR10_DIR");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--dataset-name", g.dataset, "Preset prefix in augmentation manifests");
  app.add_option("--arch", g.arch_file, "Architecture descriptor file ([architecture] section)");
  app.add_flag("--synthetic", g.synthetic, "Use the procedural dataset instead of CIFAR-10");
  app.add_option("--train-per-class", g.train_per_class, "Training images per class")->check(CLI::PositiveNumber);
  app.add_option("--val-per-class", g.val_per_class, "Validation images per class")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  BaselineOpts base;
  auto* tb = app.add_subcommand("train-baseline", "Stage one: train on clean images");
  tb->add_option("--epochs", base.epochs, "Epochs")->check(CLI::PositiveNumber);
  tb->add_option("--schedule", base.schedule, "RATE:EPOCHS list (default 1e-2:20,1e-4:10,1e-6:10, stretched to --epochs)");
  tb->add_option("--batch-size", base.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  tb->add_option("--momentum", base.momentum, "Momentum coefficient")->check(CLI::Range(0.0, 0.999999));
  tb->add_option("--checkpoint-every", base.checkpoint_every, "Checkpoint interval in epochs (0 = off)");
  tb->add_option("--output", base.output, "Snapshot path (default <out>/baseline.snap)");

  CalibrateOpts cal;
  auto* cb = app.add_subcommand("calibrate", "Find augmentation strengths giving a target accuracy drop");
  cb->add_option("--baseline", cal.baseline, "Baseline snapshot (default <out>/baseline.snap)");
  cb->add_option("--kinds", cal.kinds, "Comma-separated augmentation types");
  cb->add_option("--target-drop", cal.target_drop, "Absolute accuracy drop to reach")->check(CLI::Range(0.0, 1.0));
  cb->add_option("--tolerance", cal.tolerance, "Accepted distance from the target drop")->check(CLI::PositiveNumber);
  cb->add_option("--max-iterations", cal.max_iterations, "Bisection iteration cap")->check(CLI::PositiveNumber);
  cb->add_option("--output", cal.output, "Manifest path (default <out>/augmentations.ini)");

  FinetuneOpts ft;
  auto* fb = app.add_subcommand("finetune", "Stage two: robustness finetuning");
  add_finetune_flags(fb, ft);
  fb->add_option("--method", ft.method, "at, st or fma")->check(CLI::IsMember({"at", "st", "fma"}, CLI::ignore_case));
  fb->add_option("--strategy", ft.strategy, "ia or ca")->check(CLI::IsMember({"ia", "ca"}, CLI::ignore_case));
  fb->add_option("--kind", ft.kind, "Augmentation type for the ia strategy");
  fb->add_option("--name", ft.name, "Run directory name under <out>/runs");

  FinetuneOpts gs_ft;
  gs_ft.epochs = 3;
  std::string gs_grid = "0.01,0.1,1,10";
  double gs_margin = 0.01;
  auto* gb = app.add_subcommand("grid-search-gamma", "Pick the loss weight by short finetunes");
  add_finetune_flags(gb, gs_ft);
  gb->add_option("--method", gs_ft.method, "st or fma")->check(CLI::IsMember({"st", "fma"}, CLI::ignore_case));
  gb->add_option("--strategy", gs_ft.strategy, "ia or ca")->check(CLI::IsMember({"ia", "ca"}, CLI::ignore_case));
  gb->add_option("--kind", gs_ft.kind, "Augmentation type for the ia strategy");
  gb->add_option("--grid", gs_grid, "Comma-separated candidate values");
  gb->add_option("--clean-margin", gs_margin, "Allowed clean-accuracy loss versus the baseline");

  std::string ev_model;
  std::string ev_presets;
  bool ev_builtin = false;
  std::string ev_output;
  auto* eb = app.add_subcommand("eval", "Accuracy of one snapshot on every condition");
  eb->add_option("--model", ev_model, "Snapshot (default <out>/baseline.snap)");
  add_preset_flags(eb, ev_presets, ev_builtin);
  eb->add_option("--output", ev_output, "Write the result grid as JSON");

  FinetuneOpts rg_ft;
  BaselineOpts rg_base;
  CalibrateOpts rg_cal;
  std::string rg_methods = "at,st,fma";
  std::string rg_kinds = "B+,GN,GB";
  bool rg_auto = false;
  auto* rb = app.add_subcommand("run-grid", "Finetune every requested method and tabulate accuracies");
  add_finetune_flags(rb, rg_ft);
  rb->add_option("--methods", rg_methods, "Comma-separated methods");
  rb->add_option("--strategy", rg_ft.strategy, "ia or ca")->check(CLI::IsMember({"ia", "ca"}, CLI::ignore_case));
  rb->add_option("--kinds", rg_kinds, "Augmentation types for the ia strategy");
  rb->add_flag("--auto", rg_auto, "Train the baseline and calibrate first when their artifacts are missing");
  rb->add_option("--baseline-epochs", rg_base.epochs, "Baseline epochs under --auto")->check(CLI::PositiveNumber);

  ReportOpts rep;
  auto* pb = app.add_subcommand("report", "Training curves and augmented sample images");
  pb->add_option("--runs", rep.runs, "Directory of run folders (default <out>/runs)");
  pb->add_option("--output", rep.output, "Report directory (default <out>/report)");
  add_preset_flags(pb, rep.augmentations, rep.builtin_presets);
  pb->add_option("--samples", rep.samples, "Validation images rendered per preset (0 = none)");

  AugmentOpts aug;
  auto* ab = app.add_subcommand("augment", "Apply a preset or Combined set to a PNG");
  ab->add_option("--input", aug.input, "Input PNG")->required();
  ab->add_option("--output", aug.output, "Output PNG")->required();
  ab->add_option("--spec", aug.spec, "Preset name, type (B+, GN, ...) or combined_plus/combined_minus")->required();
  add_preset_flags(ab, aug.augmentations, aug.builtin_presets);

  app.parse(argc, argv);
  fs::create_directories(g.out_dir);

  if (*tb) {
    train_baseline_cmd(g, base, load_data(g));
    return kOk;
  }
  if (*cb) {
    calibrate_cmd(g, cal, load_data(g));
    return kOk;
  }
  if (*fb) {
    const Method method = parse_method(ft.method);
    const Strategy strategy = parse_strategy(ft.strategy);
    const std::optional<AugmentKind> kind = strategy == Strategy::IA ? std::optional(parse_kind(ft.kind)) : std::nullopt;
    const PresetTable presets = load_presets(presets_path(g, ft.augmentations), ft.builtin_presets);
    const Model baseline = load_snapshot(ft.baseline.empty() ? out_path(g, "baseline.snap") : ft.baseline,
                                         "run `robustft train-baseline` first");
    finetune_run(g, ft, baseline, presets, load_data(g), method, strategy, kind);
    return kOk;
  }
  if (*gb) {
    const Method method = parse_method(gs_ft.method);
    const Strategy strategy = parse_strategy(gs_ft.strategy);
    const std::optional<AugmentKind> kind = strategy == Strategy::IA ? std::optional(parse_kind(gs_ft.kind)) : std::nullopt;
    const PresetTable presets = load_presets(presets_path(g, gs_ft.augmentations), gs_ft.builtin_presets);
    const Model baseline = load_snapshot(gs_ft.baseline.empty() ? out_path(g, "baseline.snap") : gs_ft.baseline,
                                         "run `robustft train-baseline` first");
    const Data data = load_data(g);
    std::vector<double> grid;
    for (const auto& v : split_list(gs_grid)) grid.push_back(parse_double(v));
    if (grid.empty()) throw ParameterError("--grid needs at least one value");
    TrainConfig cfg = finetune_config(g, gs_ft, presets, method, strategy, kind);
    cfg.on_epoch = progress(g, "grid", gs_ft.epochs);
    const double clean = eval_accuracy(ModelClassifier(baseline), data.val, std::nullopt);
    const GridSearchResult res = grid_search_gamma(baseline, data.train, data.val, grid, cfg, clean, gs_margin);
    json rows = json::array();
    for (const auto& r : res.rows) {
      rows.push_back({{"value", r.value}, {"clean", r.clean_accuracy}, {"mean_augmented", r.mean_augmented_accuracy},
                      {"feasible", r.feasible}});
      std::cout << format_double(r.value) << "\tclean " << pct(r.clean_accuracy) << "\taugmented "
                << pct(r.mean_augmented_accuracy) << (r.feasible ? "" : "\t(infeasible)") << '\n';
    }
    const json out{{"method", std::string(method_name(method))}, {"baseline_clean", clean},  {"best", res.best},
                   {"constraint_violated", res.constraint_violated},  {"rows", rows}};
    write_text(out_path(g, "gamma_search.json"), out.dump(2) + "\n");
    std::cout << "best " << format_double(res.best)
              << (res.constraint_violated ? " (no value kept clean accuracy within the margin)" : "") << '\n';
    return kOk;
  }
  if (*eb) {
    const Model model = load_snapshot(ev_model.empty() ? out_path(g, "baseline.snap") : ev_model,
                                      "pass --model or run `robustft train-baseline`");
    const PresetTable presets = load_presets(presets_path(g, ev_presets), ev_builtin);
    const Data data = load_data(g);
    const MetricGrid grid = build_grid({{"Model", &model}}, data.val, presets, g.dataset);
    for (std::size_t r = 0; r < grid.conditions.size(); ++r) {
      std::cout << grid.conditions[r] << '\t' << pct(grid.cells[r][0]) << '\n';
    }
    if (!ev_output.empty()) write_text(ev_output, grid.to_json());
    return kOk;
  }
  if (*rb) {
    const Data data = load_data(g);
    const std::string snap = rg_ft.baseline.empty() ? out_path(g, "baseline.snap") : rg_ft.baseline;
    const std::string preset_file = presets_path(g, rg_ft.augmentations);
    if (rg_auto && !fs::exists(snap)) {
      rg_base.output = snap;
      train_baseline_cmd(g, rg_base, data);
    }
    if (rg_auto && !rg_ft.builtin_presets && !fs::exists(preset_file)) {
      rg_cal.baseline = snap;
      rg_cal.output = preset_file;
      calibrate_cmd(g, rg_cal, data);
    }
    const Model baseline = load_snapshot(snap, "run `robustft train-baseline` or pass --auto");
    const PresetTable presets = load_presets(preset_file, rg_ft.builtin_presets);
    const Strategy strategy = parse_strategy(rg_ft.strategy);
    std::vector<RunOutput> runs;
    for (const auto& m : split_list(rg_methods)) {
      const Method method = parse_method(m);
      if (strategy == Strategy::CA) {
        runs.push_back(finetune_run(g, rg_ft, baseline, presets, data, method, strategy, std::nullopt));
      } else {
        for (const auto& k : split_list(rg_kinds)) {
          runs.push_back(finetune_run(g, rg_ft, baseline, presets, data, method, strategy, parse_kind(k)));
        }
      }
    }
    std::vector<std::pair<std::string, const Model*>> columns{{"Baseline", &baseline}};
    for (const auto& r : runs) columns.emplace_back(r.label, &r.model);
    const MetricGrid grid = build_grid(columns, data.val, presets, g.dataset);
    write_grid(g, grid, "grid");
    std::cout << grid.to_markdown();
    return kOk;
  }
  if (*pb) return report_cmd(g, rep);
  if (*ab) return augment_cmd(g, aug);
  return kUsage;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Robust finetuning experiments: baseline training, augmentation calibration, finetuning and reports",
               "robustft"};
  try {
    return execute(app, argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const CalibrationError& e) {
    std::cerr << "calibration failed: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(storage.size()), argv.data());
}

}  // namespace robustft::cli
