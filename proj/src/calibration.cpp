#include "robustft/calibration.hpp"

#include <cmath>
#include <sstream>

#include "robustft/errors.hpp"
#include "robustft/kv.hpp"

namespace robustft {

std::vector<int> ModelClassifier::predict(std::span<const Image> images) const {
  std::vector<int> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size_) {
    const std::size_t n = std::min(batch_size_, images.size() - start);
    const auto labels = predict_labels(model_, to_batch(images.subspan(start, n)));
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

namespace {

template <class Transform>
double accuracy_with(const Classifier& clf, const LabeledDataset& ds, Transform&& transform) {
  if (ds.size() == 0) throw ContractError("eval_accuracy: dataset is empty");
  constexpr std::size_t kChunk = 500;
  std::size_t correct = 0;
  std::vector<Image> chunk;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, ds.size() - start);
    chunk.clear();
    for (std::size_t i = start; i < start + n; ++i) chunk.push_back(transform(ds.images[i], i));
    const auto pred = clf.predict(chunk);
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == ds.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

double eval_accuracy(const Classifier& clf, const LabeledDataset& ds, const std::optional<AugmentationSpec>& spec,
                     std::uint64_t seed) {
  if (!spec) return accuracy_with(clf, ds, [](const Image& img, std::size_t) { return img; });
  spec->validate();
  const RandomStream root(seed);
  return accuracy_with(clf, ds, [&](const Image& img, std::size_t i) {
    RandomStream rng = root.split(i);
    return apply(img, *spec, rng);
  });
}

double eval_accuracy(const Classifier& clf, const LabeledDataset& ds, const AugmentationSet& set, std::uint64_t seed) {
  const RandomStream root(seed);
  return accuracy_with(clf, ds, [&](const Image& img, std::size_t i) { return compose(img, set, root.split(i)); });
}

CalibrationTask CalibrationTask::for_kind(AugmentKind kind) {
  CalibrationTask t;
  t.base.kind = kind;
  switch (kind) {
    case AugmentKind::BrightnessPlus:
      t.knob = Knob::Delta, t.lo = 0.0, t.hi = 1.0, t.stronger_high = true;
      break;
    case AugmentKind::BrightnessMinus:
      t.knob = Knob::Delta, t.lo = -1.0, t.hi = 0.0, t.stronger_high = false;
      break;
    case AugmentKind::SaturationPlus:
      t.knob = Knob::Alpha, t.lo = 1.0, t.hi = 20.0, t.stronger_high = true;
      break;
    case AugmentKind::SaturationMinus:
      t.knob = Knob::Alpha, t.lo = 0.0, t.hi = 1.0, t.stronger_high = false;
      break;
    case AugmentKind::GaussianNoise:
      t.knob = Knob::Sigma, t.lo = 0.0, t.hi = 0.5, t.stronger_high = true;
      t.base.mu = 0.0;
      break;
    case AugmentKind::GaussianBlur:
      // s fixed at 3; sigma = 0.05 is numerically the identity kernel.
      t.knob = Knob::Sigma, t.lo = 0.05, t.hi = 5.0, t.stronger_high = true;
      t.base.size = 3;
      break;
    case AugmentKind::AdditiveSAP:
      t.knob = Knob::P, t.lo = 0.0, t.hi = 1.0, t.stronger_high = true;
      t.base.q = 0.5;
      t.base.rho = 0.5;
      break;
  }
  return t;
}

AugmentationSpec CalibrationTask::with_knob(double value) const {
  AugmentationSpec s = base;
  switch (knob) {
    case Knob::Delta: s.delta = value; break;
    case Knob::Alpha: s.alpha = value; break;
    case Knob::Sigma: s.sigma = value; break;
    case Knob::P: s.p = value; break;
  }
  return s;
}

void CalibrationTask::validate() const {
  if (!(lo < hi)) throw ParameterError("calibration: search bounds need lo < hi");
  if (!(target_drop >= 0.0 && target_drop <= 1.0)) throw ParameterError("calibration: target_drop must lie in [0,1]");
  if (!(tolerance > 0.0)) throw ParameterError("calibration: tolerance must be > 0");
  if (max_iterations < 1) throw ParameterError("calibration: max_iterations must be >= 1");
  with_knob(lo).validate();
  with_knob(hi).validate();
}

CalibrationResult calibrate(const Classifier& clf, const LabeledDataset& valset, const CalibrationTask& task,
                            std::uint64_t seed, std::optional<double> clean_accuracy) {
  task.validate();
  CalibrationResult res;
  res.clean_accuracy = clean_accuracy ? *clean_accuracy : eval_accuracy(clf, valset, std::nullopt, seed);

  auto measure = [&](double knob) {
    const double acc = eval_accuracy(clf, valset, task.with_knob(knob), seed);
    const double drop = res.clean_accuracy - acc;
    res.trace.emplace_back(knob, drop);
    return std::pair{acc, drop};
  };
  auto finish = [&](double knob, std::pair<double, double> m, bool saturated) {
    res.knob_value = knob;
    res.spec = task.with_knob(knob);
    res.augmented_accuracy = m.first;
    res.drop = m.second;
    res.saturated = saturated;
    return res;
  };

  const double target = task.target_drop;
  double weak = task.weak_end();
  double strong = task.strong_end();
  const auto weak_m = measure(weak);
  if (std::abs(weak_m.second - target) <= task.tolerance) return finish(weak, weak_m, false);
  if (weak_m.second > target) {
    throw CalibrationError("calibration of " + std::string(slug(task.base.kind)) + ": drop " +
                           format_double(weak_m.second) + " at the weak end already exceeds the target");
  }
  const auto strong_m = measure(strong);
  if (std::abs(strong_m.second - target) <= task.tolerance) return finish(strong, strong_m, false);
  if (strong_m.second < target) return finish(strong, strong_m, true);

  double weak_drop = weak_m.second;
  double strong_drop = strong_m.second;
  for (int it = 1; it <= task.max_iterations; ++it) {
    const double mid = 0.5 * (weak + strong);
    const auto m = measure(mid);
    res.iterations = it;
    if (m.second < weak_drop - task.tolerance || m.second > strong_drop + task.tolerance) {
      std::ostringstream os;
      os << "calibration of " << slug(task.base.kind) << ": non-monotone drop " << format_double(m.second) << " at "
         << format_double(mid) << " outside bracket [" << format_double(weak) << " -> " << format_double(weak_drop)
         << ", " << format_double(strong) << " -> " << format_double(strong_drop) << "]";
      throw CalibrationError(os.str());
    }
    if (std::abs(m.second - target) <= task.tolerance) return finish(mid, m, false);
    if (m.second < target) {
      weak = mid;
      weak_drop = m.second;
    } else {
      strong = mid;
      strong_drop = m.second;
    }
  }
  std::ostringstream os;
  os << "calibration of " << slug(task.base.kind) << ": no knob within tolerance after " << task.max_iterations
     << " iterations; last bracket [" << format_double(weak) << ", " << format_double(strong) << "] with drops ["
     << format_double(weak_drop) << ", " << format_double(strong_drop) << "]";
  throw CalibrationError(os.str());
}

}  // namespace robustft
