#include "robustft/losses.hpp"

#include <algorithm>
#include <cmath>

#include "robustft/errors.hpp"

namespace robustft {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::AT: return "at";
    case Method::ST: return "st";
    case Method::FMA: return "fma";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "at" || text == "AT") return Method::AT;
  if (text == "st" || text == "ST") return Method::ST;
  if (text == "fma" || text == "FMA") return Method::FMA;
  throw ParameterError("unknown method '" + std::string(text) + "' (expected at, st or fma)");
}

void LossConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("gamma must be >= 0");
  if (!(st_weight >= 0.0) || !std::isfinite(st_weight)) throw ParameterError("st_weight must be >= 0");
  if (!(epsilon_mean > 0.0)) throw ParameterError("epsilon_mean must be > 0");
}

Var cross_entropy(const Var& logp, std::span<const int> labels) {
  const Tensor& lp = logp->value;
  if (lp.rank() != 2) throw DimensionError("cross_entropy: logp must be rank 2 [N,K], got " + shape_to_string(lp.shape()));
  const std::size_t n = lp.dim(0), k = lp.dim(1);
  if (labels.size() != n) {
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) + " at row " + std::to_string(r) +
                          " is outside [0," + std::to_string(k) + ")");
    }
    total -= lp.at(r, static_cast<std::size_t>(labels[r]));
  }
  std::vector<int> owned(labels.begin(), labels.end());
  return make_node(Tensor::scalar(total / static_cast<double>(n)), {logp}, [owned = std::move(owned), n](Node& self) {
    Tensor& g = self.parents[0]->grad();
    const double up = self.grad()[0] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) g.at(r, static_cast<std::size_t>(owned[r])) -= up;
  });
}

Var fma_loss(std::span<const Var> taps_clean, std::span<const Var> taps_aug, double epsilon_mean) {
  if (taps_clean.empty()) throw ContractError("fma_loss: no tapped layers");
  if (taps_clean.size() != taps_aug.size()) {
    throw DimensionError("fma_loss: " + std::to_string(taps_clean.size()) + " clean taps vs " +
                         std::to_string(taps_aug.size()) + " augmented taps");
  }
  if (!(epsilon_mean > 0.0)) throw ParameterError("fma_loss: epsilon_mean must be > 0");
  const std::size_t layers = taps_clean.size();
  const std::size_t batch = taps_clean[0]->value.dim(0);
  for (std::size_t l = 0; l < layers; ++l) {
    const Shape& sc = taps_clean[l]->value.shape();
    if (sc != taps_aug[l]->value.shape()) {
      throw DimensionError("fma_loss: layer " + std::to_string(l) + " shapes differ: " + shape_to_string(sc) + " vs " +
                           shape_to_string(taps_aug[l]->value.shape()));
    }
    if (sc.size() < 2 || sc[0] != batch) {
      throw DimensionError("fma_loss: layer " + std::to_string(l) + " batch axis 0 must be " + std::to_string(batch) +
                           ", got " + shape_to_string(sc));
    }
  }

  // Per (layer, sample): guarded mean, whether the guard fired, and the squared norm.
  struct Term {
    double mean;
    bool guarded;
    double sq;
  };
  std::vector<Term> terms(layers * batch);
  double total = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& c = taps_clean[l]->value;
    const Tensor& a = taps_aug[l]->value;
    const std::size_t kappa = c.numel() / batch;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* cp = c.raw() + n * kappa;
      const double* ap = a.raw() + n * kappa;
      double s = 0.0;
      for (std::size_t i = 0; i < kappa; ++i) s += cp[i];
      const double mean = s / static_cast<double>(kappa);
      const bool guarded = !(mean > epsilon_mean);
      const double m = guarded ? epsilon_mean : mean;
      double sq = 0.0;
      for (std::size_t i = 0; i < kappa; ++i) {
        const double d = (cp[i] - ap[i]) / m;
        sq += d * d;
      }
      terms[l * batch + n] = {m, guarded, sq};
      total += sq / static_cast<double>(kappa);
    }
  }
  const double norm = 1.0 / static_cast<double>(layers * batch);
  Tensor out = Tensor::scalar(total * norm);
  require_finite(out, "fma_loss");

  std::vector<Var> parents(taps_clean.begin(), taps_clean.end());
  parents.insert(parents.end(), taps_aug.begin(), taps_aug.end());
  return make_node(std::move(out), std::move(parents), [terms = std::move(terms), layers, batch, norm](Node& self) {
    const double up = self.grad()[0];
    for (std::size_t l = 0; l < layers; ++l) {
      const Var& cn = self.parents[l];
      const Var& an = self.parents[layers + l];
      const std::size_t kappa = cn->value.numel() / batch;
      const double w = up * norm / static_cast<double>(kappa);
      for (std::size_t n = 0; n < batch; ++n) {
        const Term& t = terms[l * batch + n];
        const double inv_m2 = 1.0 / (t.mean * t.mean);
        const double* cp = cn->value.raw() + n * kappa;
        const double* ap = an->value.raw() + n * kappa;
        if (cn->requires_grad) {
          double* gc = cn->grad().raw() + n * kappa;
          // d/dc of the mean in the denominator: -2 S / m^3 / kappa per entry.
          const double mean_term = t.guarded ? 0.0 : -2.0 * t.sq / t.mean / static_cast<double>(kappa);
          for (std::size_t i = 0; i < kappa; ++i) gc[i] += w * (2.0 * (cp[i] - ap[i]) * inv_m2 + mean_term);
        }
        if (an->requires_grad) {
          double* ga = an->grad().raw() + n * kappa;
          for (std::size_t i = 0; i < kappa; ++i) ga[i] -= w * 2.0 * (cp[i] - ap[i]) * inv_m2;
        }
      }
    }
  });
}

Var st_loss(const Var& logp_clean, const Var& logp_aug, StDistance distance) {
  const Tensor& lc = logp_clean->value;
  const Tensor& la = logp_aug->value;
  if (lc.shape() != la.shape()) {
    throw DimensionError("st_loss: shapes differ: " + shape_to_string(lc.shape()) + " vs " + shape_to_string(la.shape()));
  }
  if (lc.rank() != 2) throw DimensionError("st_loss: inputs must be rank 2 [N,K], got " + shape_to_string(lc.shape()));
  const std::size_t n = lc.dim(0), k = lc.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(lc.at(r, j));
      if (distance == StDistance::KL) {
        if (p > 0.0) total += p * (lc.at(r, j) - la.at(r, j));
      } else {
        const double d = p - std::exp(la.at(r, j));
        total += d * d;
      }
    }
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  require_finite(out, "st_loss");
  return make_node(std::move(out), {logp_clean, logp_aug}, [n, k, distance](Node& self) {
    const Var& cn = self.parents[0];
    const Var& an = self.parents[1];
    const double up = self.grad()[0] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const double lcv = cn->value.at(r, j);
        const double lav = an->value.at(r, j);
        const double p = std::exp(lcv);
        double gc, ga;
        if (distance == StDistance::KL) {
          gc = p > 0.0 ? p * (lcv - lav + 1.0) : 0.0;
          ga = -p;
        } else {
          const double q = std::exp(lav);
          gc = 2.0 * (p - q) * p;
          ga = -2.0 * (p - q) * q;
        }
        if (cn->requires_grad) cn->grad().at(r, j) += up * gc;
        if (an->requires_grad) an->grad().at(r, j) += up * ga;
      }
    }
  });
}

namespace {
Tensor concat_batches(const Tensor& a, const Tensor& b) {
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor(std::move(shape), std::move(data));
}
}  // namespace

LossBreakdown total_loss(const LossConfig& config, const Model& model, const Tensor& batch_clean, const Tensor& batch_aug,
                         std::span<const int> labels) {
  config.validate();
  if (batch_clean.shape() != batch_aug.shape()) {
    throw ContractError("total_loss: clean batch " + shape_to_string(batch_clean.shape()) + " and augmented batch " +
                        shape_to_string(batch_aug.shape()) + " are not aligned");
  }
  if (batch_clean.rank() != 4 || labels.size() != batch_clean.dim(0)) {
    throw ContractError("total_loss: " + std::to_string(labels.size()) + " labels for batch " +
                        shape_to_string(batch_clean.shape()));
  }

  LossBreakdown out;
  switch (config.method) {
    case Method::AT: {
      std::vector<int> both(labels.begin(), labels.end());
      both.insert(both.end(), labels.begin(), labels.end());
      const auto fwd = forward(model, concat_batches(batch_clean, batch_aug), false);
      out.total = cross_entropy(log_softmax(fwd.logits), both);
      out.task = out.total->value[0];
      break;
    }
    case Method::ST: {
      const auto clean = forward(model, batch_clean, false);
      const auto aug = forward(model, batch_aug, false);
      const Var logp_clean = log_softmax(clean.logits);
      const Var task = cross_entropy(logp_clean, labels);
      const Var reg = st_loss(logp_clean, log_softmax(aug.logits), config.st_distance);
      out.task = task->value[0];
      out.regularizer = reg->value[0];
      out.total = add(task, scale(reg, config.st_weight));
      break;
    }
    case Method::FMA: {
      const auto clean = forward(model, batch_clean, true);
      const auto aug = forward(model, batch_aug, true);
      const Var task = cross_entropy(log_softmax(clean.logits), labels);
      const Var reg = fma_loss(clean.taps, aug.taps, config.epsilon_mean);
      out.task = task->value[0];
      out.regularizer = reg->value[0];
      out.total = add(task, scale(reg, config.gamma));
      break;
    }
  }
  return out;
}

}  // namespace robustft
