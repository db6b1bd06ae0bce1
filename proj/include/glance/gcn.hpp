#pragma once

#include <cstdint>
#include <vector>

#include "glance/graph.hpp"
#include "glance/mlp.hpp"
#include "glance/mlp_train.hpp"
#include "glance/optim.hpp"
#include "json.hpp"

namespace glance {

// D̃^{-1/2} (A + I) D̃^{-1/2} in CSR form.
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<NodeId> cols;
  std::vector<double> vals;

  Matrix multiply(const Matrix& x) const;
  Matrix to_dense() const;
};

NormalizedAdjacency normalize_adjacency(const TextAttributedGraph& g);

// Frozen structural expert: GCN encoder plus a one-layer prediction head.
struct GcnModel {
  std::vector<Matrix> weights;  // feature_dim -> hidden -> ... -> hidden
  MlpModel head;                // hidden -> num_classes

  static GcnModel create(std::size_t feature_dim, std::size_t hidden, int num_layers,
                         int num_classes, Rng& rng);

  std::size_t hidden_dim() const { return weights.back().cols(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  ParamViews parameters();

  friend bool operator==(const GcnModel&, const GcnModel&) = default;
};

struct GcnCache {
  std::vector<Matrix> aggregated;  // Â · (layer input after dropout)
  std::vector<Matrix> pre;         // pre-activations
  std::vector<Matrix> masks;       // dropout mask on each layer input (empty = none)
  Matrix head_mask;                // dropout mask on z before the head
  MlpCache head;
};

struct GcnForward {
  Matrix z;       // final hidden representation z_G
  Matrix logits;  // head(z)
  GcnCache cache;
};

struct GcnGradients {
  std::vector<Matrix> weights;
  MlpGradients head;

  ParamViews views();
};

// Layer l computes relu(Â H W_l), identity on the final encoder layer.
// Dropout hits hidden activations only, and only when rng is given.
GcnForward gcn_forward(const GcnModel& model, const NormalizedAdjacency& adj, const Matrix& x,
                       double dropout_rate = 0.0, Rng* rng = nullptr);

// Gradients of a loss given d loss / d logits, plus optionally d loss / d z.
GcnGradients gcn_backward(const GcnModel& model, const NormalizedAdjacency& adj,
                          const GcnCache& cache, const Matrix& grad_logits,
                          const Matrix* grad_z = nullptr);

Matrix feature_matrix(const TextAttributedGraph& g);

struct GnnConfig {
  int num_layers = 2;
  std::size_t hidden = 64;
  TrainConfig train;
};

struct GnnTrainResult {
  GcnModel model;  // best-validation checkpoint
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochLog> history;
};

GnnTrainResult gnn_train(const TextAttributedGraph& g, const GnnConfig& config);

// Row-wise softmax of the head applied to z_G.
Matrix head_predict(const GcnModel& model, const Matrix& z);

enum class UncertaintyKind { entropy, disagreement };

// MC-dropout uncertainty in [0, 1]: normalized entropy of the mean predictive
// distribution (default) or 1 - modal vote fraction.
std::vector<double> mc_dropout_uncertainty(const GcnModel& model, const NormalizedAdjacency& adj,
                                           const Matrix& x, int passes, double rate,
                                           std::uint64_t seed,
                                           UncertaintyKind kind = UncertaintyKind::entropy);

nlohmann::json gcn_to_json(const GcnModel& model);
GcnModel gcn_from_json(const nlohmann::json& j);

}  // namespace glance
