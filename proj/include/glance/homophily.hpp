#pragma once

#include <cstdint>
#include <vector>

#include "glance/graph.hpp"
#include "glance/mlp.hpp"
#include "glance/mlp_train.hpp"
#include "json.hpp"

namespace glance {

// Label-free homophily proxy: an MLP Q over raw node features.
struct HomophilyEstimator {
  MlpModel q;  // feature_dim -> hidden -> num_classes
  std::uint64_t seed = 0;
  int epochs = 0;
  double val_accuracy = 0.0;
};

struct QConfig {
  std::size_t hidden = 64;
  TrainConfig train;
};

// Trains Q on train-split features and labels only; never reads edges.
HomophilyEstimator train_q(const TextAttributedGraph& g, const QConfig& config);

// p_{Q,v} for every node (row-wise softmax).
Matrix q_probabilities(const HomophilyEstimator& est, const TextAttributedGraph& g);

// Fraction of neighbors whose argmax prediction matches v's.
std::vector<double> hard_homophily_estimate(const TextAttributedGraph& g, const Matrix& q_probs);

// p_{Q,v} · mean_{u ∈ N(v)} p_{Q,u}.
std::vector<double> soft_homophily(const TextAttributedGraph& g, const Matrix& q_probs);

nlohmann::json estimator_to_json(const HomophilyEstimator& est);
HomophilyEstimator estimator_from_json(const nlohmann::json& j);

}  // namespace glance
