#include "glance/mlp_train.hpp"

#include <string>

#include "glance/errors.hpp"
#include "glance/loss.hpp"

namespace glance {

double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> rows) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (NodeId r : rows) hit += static_cast<int>(argmax(logits.row(r))) == labels[r] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

ClassifierFit fit_mlp_classifier(MlpModel init, const Matrix& x, std::span<const int> labels,
                                 std::span<const NodeId> train_rows,
                                 std::span<const NodeId> val_rows, const TrainConfig& config) {
  config.validate();
  if (train_rows.empty()) throw ConfigError("classifier training needs a nonempty train split");
  ClassifierFit fit;
  fit.model = std::move(init);
  MlpModel current = fit.model;
  AdamW opt({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng = Rng(config.seed).split(11);
  const Matrix x_train = select_rows(x, train_rows);
  std::vector<int> y_train;
  for (NodeId r : train_rows) y_train.push_back(labels[r]);
  std::vector<std::size_t> all(train_rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  fit.best_val_accuracy = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    BatchCrossEntropy ce;
    Matrix logits;
    try {
      auto fwd = mlp_forward(current, x_train, config.dropout_rate, &rng);
      ce = mean_cross_entropy(fwd.output, all, y_train);
      auto back = mlp_backward(current, fwd.cache, ce.grad);
      auto gviews = back.grads.views();
      clip_gradients(gviews, config.clip_norm);
      opt.step(current.parameters(), const_views(gviews));
      logits = mlp_forward(current, x).output;
    } catch (const DivergenceError& e) {
      throw DivergenceError("classifier training diverged at epoch " + std::to_string(epoch) + ": " +
                            e.what());
    }
    EpochLog log{epoch, ce.mean_loss, accuracy(logits, labels, train_rows),
                 val_rows.empty() ? accuracy(logits, labels, train_rows)
                                  : accuracy(logits, labels, val_rows)};
    fit.history.push_back(log);
    if (log.val_accuracy > fit.best_val_accuracy) {
      fit.best_val_accuracy = log.val_accuracy;
      fit.best_epoch = epoch;
      fit.model = current;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return fit;
}

}  // namespace glance
