#include "glance/optim.hpp"

#include <cmath>

#include "glance/errors.hpp"

namespace glance {

void AdamW::step(const ParamViews& params, const ConstParamViews& grads) {
  if (params.size() != grads.size()) throw ConfigError("AdamW: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ConfigError("AdamW: parameter count changed");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || params[t].size() != m_[t].size()) {
      throw ConfigError("AdamW: shape mismatch at tensor " + std::to_string(t));
    }
  }
  ++step_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    const auto g = grads[t];
    auto& m = m_[t];
    auto& v = v_[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= c.learning_rate * c.weight_decay * p[i];
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double global_norm(const ConstParamViews& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  return std::sqrt(sq);
}

double clip_gradients(const ParamViews& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: max_norm must be positive");
  const double norm = global_norm(const_views(grads));
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto g : grads) {
      for (double& x : g) x *= scale;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw ConfigError("patience must be in [1, max_epochs]");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

}  // namespace glance
