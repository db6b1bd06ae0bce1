#pragma once

#include <cstdint>
#include <vector>

#include "glance/mlp.hpp"

namespace glance {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with decoupled weight decay and bias-corrected moments. Moment
// buffers are allocated on the first step and must keep their shapes.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(const ParamViews& params, const ConstParamViews& grads);

  const AdamWConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

double global_norm(const ConstParamViews& grads);

// Rescales all gradients jointly so their global l2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(const ParamViews& grads, double max_norm = 1.0);

struct TrainConfig {
  double learning_rate = 1e-2;
  double weight_decay = 1e-4;
  int max_epochs = 1000;
  int patience = 30;
  double dropout_rate = 0.5;
  double clip_norm = 1.0;
  int batch_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

}  // namespace glance
