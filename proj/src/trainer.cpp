#include "robustft/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "robustft/calibration.hpp"
#include "robustft/errors.hpp"
#include "robustft/kv.hpp"

namespace robustft {

using nlohmann::json;

void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double rate, double momentum) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
    throw ContractError("sgd_momentum_step: parameter " + shape_to_string(param.shape()) + ", gradient " +
                        shape_to_string(grad.shape()) + " and velocity " + shape_to_string(velocity.shape()) +
                        " must share a shape");
  }
  for (std::size_t i = 0; i < param.numel(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= rate * velocity[i];
  }
}

SgdMomentum::SgdMomentum(const Model& model, double momentum) : momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0,1)");
  for (const auto& [name, p] : model.parameters()) velocity_.push_back(Tensor::zeros(p->value.shape()));
}

void SgdMomentum::step(const Model& model, double rate) {
  const auto& params = model.parameters();
  if (params.size() != velocity_.size()) throw ContractError("SgdMomentum: model does not match optimizer state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node& p = *params[i].second;
    if (!p.has_grad()) continue;
    sgd_momentum_step(p.value, p.grad(), velocity_[i], rate, momentum_);
  }
}

std::string_view stage_name(Stage s) { return s == Stage::Baseline ? "baseline" : "finetune"; }

TrainConfig TrainConfig::baseline_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = Stage::Finetune;
  c.epochs = 30;
  c.schedule = {{1e-3, 30}};
  return c;
}

double TrainConfig::rate_at(int epoch) const {
  int end = 0;
  for (const auto& s : schedule) {
    end += s.epochs;
    if (epoch < end) return s.rate;
  }
  throw ContractError("rate_at: epoch " + std::to_string(epoch) + " lies beyond the learning-rate schedule");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  int total = 0;
  for (const auto& s : schedule) {
    if (!(s.rate > 0.0)) throw ParameterError("learning rates must be > 0");
    if (s.epochs < 1) throw ParameterError("schedule stages need >= 1 epoch");
    total += s.epochs;
  }
  if (total != epochs) {
    throw ParameterError("learning-rate schedule covers " + std::to_string(total) + " epochs, config has " +
                         std::to_string(epochs));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0,1)");
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  loss.validate();
  if (stage == Stage::Finetune) strategy.validate();
}

namespace {

json epoch_to_json(const EpochRecord& e) {
  json j = {{"epoch", e.epoch},         {"rate", e.rate},
            {"set", e.set_label},       {"loss", e.loss},
            {"task_loss", e.task_loss}, {"regularizer", e.regularizer},
            {"clean_accuracy", e.clean_accuracy}};
  j["augmented_accuracy"] = e.augmented_accuracy;
  return j;
}

EpochRecord epoch_from_json(const json& j) {
  EpochRecord e;
  e.epoch = j.at("epoch").get<int>();
  e.rate = j.at("rate").get<double>();
  e.set_label = j.at("set").get<std::string>();
  e.loss = j.at("loss").get<double>();
  e.task_loss = j.at("task_loss").get<double>();
  e.regularizer = j.at("regularizer").get<double>();
  e.clean_accuracy = j.at("clean_accuracy").get<double>();
  e.augmented_accuracy = j.at("augmented_accuracy").get<std::map<std::string, double>>();
  return e;
}

std::string config_json(const TrainConfig& c) {
  json sched = json::array();
  for (const auto& s : c.schedule) sched.push_back({{"rate", s.rate}, {"epochs", s.epochs}});
  json j = {{"stage", stage_name(c.stage)},
            {"epochs", c.epochs},
            {"schedule", sched},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"method", method_name(c.loss.method)},
            {"gamma", c.loss.gamma},
            {"st_weight", c.loss.st_weight},
            {"st_distance", c.loss.st_distance == StDistance::KL ? "kl" : "l2"},
            {"epsilon_mean", c.loss.epsilon_mean},
            {"curve_eval_limit", c.curve_eval_limit},
            {"checkpoint_every", c.checkpoint_every}};
  if (c.stage == Stage::Finetune) {
    j["strategy"] = strategy_name(c.strategy.strategy);
    j["alternation"] = c.strategy.alternation == Alternation::PerEpoch ? "per_epoch" : "per_batch";
    j["plus_on_even"] = c.strategy.plus_on_even;
  }
  return j.dump();
}

LabeledDataset limited(const LabeledDataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  LabeledDataset out;
  out.class_count = ds.class_count;
  out.split = ds.split;
  out.images.assign(ds.images.begin(), ds.images.begin() + static_cast<long>(limit));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<long>(limit));
  return out;
}

void append_csv(const std::string& path, const EpochRecord& e, bool write_header) {
  if (path.empty()) return;
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, write_header ? std::ios::trunc : std::ios::app);
  if (!out) throw FormatError("cannot open metrics stream '" + path + "'");
  if (write_header) {
    out << "epoch,rate,set,loss,task_loss,regularizer,clean";
    for (const auto& [k, v] : e.augmented_accuracy) out << ',' << k;
    out << '\n';
  }
  out << e.epoch << ',' << format_double(e.rate) << ',' << e.set_label << ',' << format_double(e.loss) << ','
      << format_double(e.task_loss) << ',' << format_double(e.regularizer) << ',' << format_double(e.clean_accuracy);
  for (const auto& [k, v] : e.augmented_accuracy) out << ',' << format_double(v);
  out << '\n';
}

struct EpochLoss {
  double loss = 0.0, task = 0.0, reg = 0.0;
};

// One pass over `train` in a seeded order. When `set` is non-null every batch
// is paired with its augmented copy and optimized with the configured method.
EpochLoss run_epoch(Model& model, SgdMomentum& opt, const LabeledDataset& train, const TrainConfig& config, int epoch) {
  RandomStream shuffle_rng = RandomStream(config.seed).split(0x5348554646ULL).split(static_cast<std::uint64_t>(epoch));
  const auto order = permutation(train.size(), shuffle_rng);
  const double rate = config.rate_at(epoch);
  EpochLoss acc;
  std::size_t batches = 0;
  std::vector<const Image*> clean_ptrs;
  std::vector<Image> aug_images;
  std::vector<const Image*> aug_ptrs;
  std::vector<int> labels;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batches) {
    const std::size_t n = std::min(config.batch_size, order.size() - start);
    clean_ptrs.clear();
    labels.clear();
    for (std::size_t i = start; i < start + n; ++i) {
      clean_ptrs.push_back(&train.images[order[i]]);
      labels.push_back(train.labels[order[i]]);
    }
    const Tensor clean = to_batch(std::span<const Image* const>(clean_ptrs));
    model.zero_grad();
    Var total;
    if (config.stage == Stage::Baseline) {
      total = cross_entropy(log_softmax(forward(model, clean, false).logits), labels);
      acc.task += total->value[0];
    } else {
      const AugmentationSet& set = select_set(config.strategy, epoch, static_cast<std::int64_t>(batches));
      aug_images.clear();
      aug_ptrs.clear();
      for (std::size_t i = start; i < start + n; ++i) {
        aug_images.push_back(compose(train.images[order[i]], set, pair_stream(config.seed, epoch, order[i])));
      }
      for (const auto& img : aug_images) aug_ptrs.push_back(&img);
      const Tensor aug = to_batch(std::span<const Image* const>(aug_ptrs));
      const LossBreakdown parts = total_loss(config.loss, model, clean, aug, labels);
      total = parts.total;
      acc.task += parts.task;
      acc.reg += parts.regularizer;
    }
    if (!std::isfinite(total->value[0])) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
    }
    acc.loss += total->value[0];
    backward(total);
    opt.step(model, rate);
  }
  const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
  return {acc.loss / nb, acc.task / nb, acc.reg / nb};
}

void maybe_checkpoint(const Model& model, const TrainConfig& config, int epoch) {
  if (config.checkpoint_every <= 0 || config.checkpoint_dir.empty()) return;
  if ((epoch + 1) % config.checkpoint_every != 0) return;
  std::ostringstream name;
  name << "epoch_" << std::setw(3) << std::setfill('0') << epoch + 1 << ".snap";
  save_model_file(model, (std::filesystem::path(config.checkpoint_dir) / name.str()).string());
}

RunManifest start_manifest(const TrainConfig& config, const LabeledDataset& train, const LabeledDataset& val) {
  RunManifest m;
  m.stage = stage_name(config.stage);
  m.config_text = config_json(config);
  m.data_provenance = train.provenance;
  m.data_provenance.insert(m.data_provenance.end(), val.provenance.begin(), val.provenance.end());
  if (config.stage == Stage::Finetune) {
    m.method = method_name(config.loss.method);
    m.strategy = strategy_name(config.strategy.strategy);
    m.gamma = config.loss.gamma;
    m.st_weight = config.loss.st_weight;
    m.composition_order = composition_order();
    if (config.strategy.strategy == Strategy::CA) {
      m.parity = config.strategy.plus_on_even ? "combined_plus_on_even" : "combined_minus_on_even";
      for (const auto* set : {&config.strategy.combined_plus, &config.strategy.combined_minus}) {
        for (const auto& s : set->specs) m.augmentations.set(std::string(slug(s.kind)), s);
      }
    } else {
      for (const auto& s : config.strategy.single.specs) m.augmentations.set(std::string(slug(s.kind)), s);
    }
  }
  for (const auto& s : config.eval_specs) m.augmentations.set("eval/" + std::string(slug(s.kind)), s);
  return m;
}

}  // namespace

std::string RunManifest::to_json() const {
  json j;
  j["format"] = "robustft-run/1";
  j["stage"] = stage;
  j["code_version"] = code_version;
  j["method"] = method;
  j["strategy"] = strategy;
  j["gamma"] = gamma;
  j["st_weight"] = st_weight;
  j["config"] = config_text.empty() ? json::object() : json::parse(config_text);
  j["augmentations"] = augmentations.to_text();
  j["composition_order"] = composition_order;
  j["parity"] = parity;
  j["data_provenance"] = data_provenance;
  json ep = json::array();
  for (const auto& e : epochs) ep.push_back(epoch_to_json(e));
  j["epochs"] = ep;
  j["final_metrics"] = final_metrics;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "robustft-run/1") throw FormatError("unsupported run manifest format");
    RunManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.method = j.at("method").get<std::string>();
    m.strategy = j.at("strategy").get<std::string>();
    m.gamma = j.at("gamma").get<double>();
    m.st_weight = j.at("st_weight").get<double>();
    m.config_text = j.at("config").dump();
    m.augmentations = PresetTable::parse(j.at("augmentations").get<std::string>());
    m.composition_order = j.at("composition_order").get<std::vector<std::string>>();
    m.parity = j.at("parity").get<std::string>();
    m.data_provenance = j.at("data_provenance").get<std::vector<std::string>>();
    for (const auto& e : j.at("epochs")) m.epochs.push_back(epoch_from_json(e));
    m.final_metrics = j.at("final_metrics").get<std::map<std::string, double>>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt run manifest: ") + e.what());
  }
}

void RunManifest::save(const std::string& path) const { write_file_atomic(path, to_json()); }

RunManifest RunManifest::load(const std::string& path) {
  try {
    return from_json(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

TrainResult train_baseline(const Model& init, const LabeledDataset& train, const LabeledDataset& val,
                           const TrainConfig& config) {
  if (config.stage != Stage::Baseline) throw ContractError("train_baseline: config stage must be baseline");
  config.validate();
  train.validate();
  val.validate();
  Model model = init.clone();
  model.metadata.seed = config.seed;
  model.metadata.stage = "baseline";
  SgdMomentum opt(model, config.momentum);
  TrainResult best{model.clone(), start_manifest(config, train, val)};
  double best_acc = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochLoss l = run_epoch(model, opt, train, config, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.rate = config.rate_at(epoch);
    rec.loss = l.loss;
    rec.task_loss = l.task;
    rec.clean_accuracy = eval_accuracy(ModelClassifier(model), val, std::nullopt);
    model.metadata.epoch = epoch + 1;
    if (rec.clean_accuracy > best_acc) {
      best_acc = rec.clean_accuracy;
      best.model = model.clone();
    }
    append_csv(config.metrics_csv, rec, epoch == 0);
    maybe_checkpoint(model, config, epoch);
    best.manifest.epochs.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
  }
  best.manifest.final_metrics["clean"] = best_acc;
  best.manifest.final_metrics["best_epoch"] = static_cast<double>(best.model.metadata.epoch);
  return best;
}

TrainResult finetune(const Model& baseline, const LabeledDataset& train, const LabeledDataset& val,
                     const TrainConfig& config) {
  if (config.stage != Stage::Finetune) throw ContractError("finetune: config stage must be finetune");
  config.validate();
  train.validate();
  val.validate();
  Model model = baseline.clone();
  model.metadata.stage = "finetune";
  model.metadata.seed = config.seed;
  SgdMomentum opt(model, config.momentum);
  RunManifest manifest = start_manifest(config, train, val);
  const LabeledDataset curve_val = limited(val, config.curve_eval_limit);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochLoss l = run_epoch(model, opt, train, config, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.rate = config.rate_at(epoch);
    rec.set_label = select_set(config.strategy, epoch).label();
    rec.loss = l.loss;
    rec.task_loss = l.task;
    rec.regularizer = l.reg;
    const ModelClassifier clf(model);
    rec.clean_accuracy = eval_accuracy(clf, curve_val, std::nullopt);
    for (const auto& spec : config.eval_specs) {
      rec.augmented_accuracy[std::string(short_name(spec.kind))] = eval_accuracy(clf, curve_val, spec);
    }
    model.metadata.epoch = baseline.metadata.epoch + epoch + 1;
    append_csv(config.metrics_csv, rec, epoch == 0);
    maybe_checkpoint(model, config, epoch);
    manifest.epochs.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
  }
  const ModelClassifier clf(model);
  manifest.final_metrics["clean"] = eval_accuracy(clf, val, std::nullopt);
  for (const auto& spec : config.eval_specs) {
    manifest.final_metrics[std::string(short_name(spec.kind))] = eval_accuracy(clf, val, spec);
  }
  return {std::move(model), std::move(manifest)};
}

GridSearchResult grid_search_gamma(const Model& baseline, const LabeledDataset& train, const LabeledDataset& val,
                                   std::span<const double> grid, const TrainConfig& config, double baseline_clean,
                                   double clean_margin) {
  if (grid.empty()) throw ContractError("grid_search_gamma: grid is empty");
  if (config.eval_specs.empty()) throw ContractError("grid_search_gamma: needs eval_specs to score augmented accuracy");
  GridSearchResult res;
  for (double value : grid) {
    TrainConfig c = config;
    c.on_epoch = nullptr;
    c.metrics_csv.clear();
    c.checkpoint_every = 0;
    if (config.loss.method == Method::ST) {
      c.loss.st_weight = value;
    } else {
      c.loss.gamma = value;
    }
    const TrainResult run = finetune(baseline, train, val, c);
    GridSearchRow row;
    row.value = value;
    row.clean_accuracy = run.manifest.final_metrics.at("clean");
    double sum = 0.0;
    for (const auto& spec : config.eval_specs) sum += run.manifest.final_metrics.at(std::string(short_name(spec.kind)));
    row.mean_augmented_accuracy = sum / static_cast<double>(config.eval_specs.size());
    row.feasible = row.clean_accuracy >= baseline_clean - clean_margin;
    res.rows.push_back(row);
  }
  const GridSearchRow* best = nullptr;
  for (const auto& row : res.rows) {
    if (row.feasible && (!best || row.mean_augmented_accuracy > best->mean_augmented_accuracy)) best = &row;
  }
  if (!best) {
    res.constraint_violated = true;
    for (const auto& row : res.rows) {
      const double score = row.mean_augmented_accuracy + row.clean_accuracy;
      if (!best || score > best->mean_augmented_accuracy + best->clean_accuracy) best = &row;
    }
  }
  res.best = best->value;
  return res;
}

}  // namespace robustft
