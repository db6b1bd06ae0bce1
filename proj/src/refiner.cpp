#include "glance/refiner.hpp"

#include <numeric>

#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"
#include "glance/loss.hpp"

namespace glance {

RefinerModel RefinerModel::create(std::size_t gnn_dim, std::size_t llm_dim, std::size_t hidden,
                                  int num_classes, Rng& rng) {
  const std::size_t dims[] = {gnn_dim + llm_dim, hidden, static_cast<std::size_t>(num_classes)};
  return {MlpModel::create(dims, rng), 0.0};
}

Matrix refiner_inputs(const Matrix& z_gnn, const Matrix& z_llm) { return hconcat(z_gnn, z_llm); }

Matrix refine_predict(const RefinerModel& model, const Matrix& z_gnn, const Matrix& z_llm) {
  return softmax_rows(mlp_forward(model.c, refiner_inputs(z_gnn, z_llm)).output);
}

namespace {

struct Pass {
  MlpForward fwd;
  BatchCrossEntropy ce;
  std::vector<double> losses;
};

Pass forward_loss(const RefinerModel& model, const RefinerBatch& batch, Rng* rng) {
  if (batch.labels.empty()) throw ConfigError("refiner batch is empty");
  if (batch.z_gnn.rows() != batch.labels.size() || batch.z_llm.rows() != batch.labels.size()) {
    throw ConfigError("refiner batch rows disagree");
  }
  Pass p;
  p.fwd = mlp_forward(model.c, refiner_inputs(batch.z_gnn, batch.z_llm), model.dropout_rate, rng);
  std::vector<std::size_t> rows(batch.labels.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  p.ce = mean_cross_entropy(p.fwd.output, rows, batch.labels);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    p.losses.push_back(
        softmax_cross_entropy(p.fwd.output.row(i), static_cast<std::size_t>(batch.labels[i])).loss);
  }
  return p;
}

}  // namespace

MlpGradients refiner_gradients(const RefinerModel& model, const RefinerBatch& batch, double* mean_loss) {
  auto p = forward_loss(model, batch, nullptr);
  if (mean_loss) *mean_loss = p.ce.mean_loss;
  return mlp_backward(model.c, p.fwd.cache, p.ce.grad).grads;
}

RefinerStep refiner_step(RefinerModel& model, AdamW& optimizer, const RefinerBatch& batch,
                         double clip_norm, Rng* dropout_rng) {
  auto p = forward_loss(model, batch, dropout_rng);
  auto grads = mlp_backward(model.c, p.fwd.cache, p.ce.grad).grads;
  auto views = grads.views();
  clip_gradients(views, clip_norm);
  optimizer.step(model.c.parameters(), const_views(views));
  return {p.ce.mean_loss, std::move(p.losses)};
}

nlohmann::json refiner_to_json(const RefinerModel& model) {
  return mlp_to_json(model.c, "refiner", {{"dropout", model.dropout_rate}});
}

RefinerModel refiner_from_json(const nlohmann::json& j) {
  return {mlp_from_json(j, "refiner"), j.value("dropout", 0.0)};
}

}  // namespace glance
