#pragma once

#include <span>
#include <vector>

#include "glance/mlp.hpp"
#include "glance/optim.hpp"
#include "json.hpp"

namespace glance {

// Fusion head C over [z_G ‖ z_L].
struct RefinerModel {
  MlpModel c;
  double dropout_rate = 0.0;

  static RefinerModel create(std::size_t gnn_dim, std::size_t llm_dim, std::size_t hidden,
                             int num_classes, Rng& rng);
  std::size_t input_dim() const { return c.input_dim(); }
};

// Rows of [z_G ‖ z_L]; z_G always comes first.
Matrix refiner_inputs(const Matrix& z_gnn, const Matrix& z_llm);

// softmax(C([z_G ‖ z_L])) per row. No dropout.
Matrix refine_predict(const RefinerModel& model, const Matrix& z_gnn, const Matrix& z_llm);

struct RefinerBatch {
  Matrix z_gnn;
  Matrix z_llm;
  std::vector<int> labels;
};

struct RefinerStep {
  double mean_loss = 0.0;
  std::vector<double> losses;  // per-row cross-entropy before the update
};

// One clipped AdamW step on C from the mean cross-entropy of the batch.
// Inputs are constants; nothing upstream receives gradients.
RefinerStep refiner_step(RefinerModel& model, AdamW& optimizer, const RefinerBatch& batch,
                         double clip_norm = 1.0, Rng* dropout_rng = nullptr);

// Gradients of the mean cross-entropy w.r.t. C's parameters (no update).
MlpGradients refiner_gradients(const RefinerModel& model, const RefinerBatch& batch,
                               double* mean_loss = nullptr);

nlohmann::json refiner_to_json(const RefinerModel& model);
RefinerModel refiner_from_json(const nlohmann::json& j);

}  // namespace glance
