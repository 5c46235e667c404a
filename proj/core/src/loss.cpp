#include "icepll/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace icepll {

std::string LossConfig::describe() const {
  char buf[96];
  if (kind == LossKind::CategoricalCrossEntropy) {
    std::snprintf(buf, sizeof(buf), "cce%s", class_weights ? "+weights" : "");
  } else {
    std::snprintf(buf, sizeof(buf), "focal(alpha=%g,gamma=%g)%s", alpha, gamma,
                  class_weights ? "+weights" : "");
  }
  return buf;
}

Vec softmax(const Vec& logits) {
  Vec p(logits.size());
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    denom += p[i];
  }
  for (double& v : p) {
    v = std::clamp(v / denom, kProbEpsilon, 1.0 - kProbEpsilon);
  }
  return p;
}

namespace {

double weight_at(const LossConfig& config, std::size_t i) {
  return config.class_weights ? (*config.class_weights)[i] : 1.0;
}

double weighted_loss(const Vec& p, const Vec& y, const LossConfig& config) {
  if (p.size() != y.size()) throw LengthMismatch(p.size(), y.size());
  if (config.class_weights && config.class_weights->size() != p.size())
    throw LengthMismatch(config.class_weights->size(), p.size());
  const bool focal = config.kind == LossKind::Focal;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 0.0) continue;
    double term = -std::log(p[i]) * y[i];
    if (focal) term *= config.alpha * std::pow(1.0 - p[i], config.gamma);
    total += weight_at(config, i) * term;
  }
  return total;
}

}  // namespace

double cross_entropy(const Vec& p, const Vec& y) {
  return weighted_loss(p, y, LossConfig::cce());
}

double focal_loss(const Vec& p, const Vec& y, double alpha, double gamma) {
  return weighted_loss(p, y, LossConfig::focal(alpha, gamma));
}

Vec class_weights(const std::vector<std::size_t>& counts) {
  const double l = static_cast<double>(counts.size());
  double n = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) throw EmptyClass(i);
    n += static_cast<double>(counts[i]);
  }
  Vec w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    w[i] = n / (l * static_cast<double>(counts[i]));
  }
  return w;
}

double loss_value(const Vec& p, const Vec& y, const LossConfig& config) {
  return weighted_loss(p, y, config);
}

Vec loss_gradient(const Vec& logits, const Vec& y, const LossConfig& config) {
  if (logits.size() != y.size()) throw LengthMismatch(logits.size(), y.size());
  if (config.class_weights && config.class_weights->size() != logits.size())
    throw LengthMismatch(config.class_weights->size(), logits.size());
  const Vec p = softmax(logits);
  const bool focal = config.kind == LossKind::Focal;

  // dL/dp_i for candidate entries, then chain through the softmax Jacobian:
  // dL/dz_j = p_j * (g_j - sum_i g_i p_i).
  Vec g(p.size(), 0.0);
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 0.0) continue;
    double dldp;
    if (focal) {
      const double one_minus = 1.0 - p[i];
      dldp = -std::pow(one_minus, config.gamma) / p[i];
      if (config.gamma != 0.0) {
        dldp += config.gamma * std::pow(one_minus, config.gamma - 1.0) * std::log(p[i]);
      }
      dldp *= config.alpha;
    } else {
      dldp = -1.0 / p[i];
    }
    g[i] = weight_at(config, i) * y[i] * dldp;
    dot += g[i] * p[i];
  }
  Vec grad(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    grad[j] = p[j] * (g[j] - dot);
  }
  return grad;
}

double batch_loss(const std::vector<Vec>& logits_batch, const std::vector<Vec>& labels_batch,
                  const LossConfig& config) {
  if (logits_batch.size() != labels_batch.size()) {
    throw LengthMismatch(logits_batch.size(), labels_batch.size());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits_batch.size(); ++i) {
    total += loss_value(softmax(logits_batch[i]), labels_batch[i], config);
  }
  return logits_batch.empty() ? 0.0 : total / static_cast<double>(logits_batch.size());
}

}  // namespace icepll
