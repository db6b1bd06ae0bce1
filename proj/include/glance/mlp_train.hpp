#pragma once

#include <span>
#include <vector>

#include "glance/graph.hpp"
#include "glance/mlp.hpp"
#include "glance/optim.hpp"

namespace glance {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct ClassifierFit {
  MlpModel model;  // best-validation checkpoint
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochLog> history;
};

// Full-batch supervised training of an MLP classifier on rows of `x` with
// AdamW, global-norm clipping, and early stopping on validation accuracy.
ClassifierFit fit_mlp_classifier(MlpModel init, const Matrix& x, std::span<const int> labels,
                                 std::span<const NodeId> train_rows,
                                 std::span<const NodeId> val_rows, const TrainConfig& config);

double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> rows);

}  // namespace glance
