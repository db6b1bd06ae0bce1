#include "glance/homophily.hpp"

#include <algorithm>

#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"
#include "glance/gcn.hpp"
#include "glance/loss.hpp"
#include "glance/metrics.hpp"

namespace glance {

HomophilyEstimator train_q(const TextAttributedGraph& g, const QConfig& config) {
  const auto train = g.nodes_in(Split::train);
  const auto val = g.nodes_in(Split::val);
  if (train.empty()) throw ConfigError("train_q needs a nonempty train split");
  Rng rng = Rng(config.train.seed).split(21);
  const std::size_t dims[] = {g.feature_dim(), config.hidden, static_cast<std::size_t>(g.num_classes())};
  auto fit = fit_mlp_classifier(MlpModel::create(dims, rng), feature_matrix(g), g.labels(), train,
                                val, config.train);
  return {std::move(fit.model), config.train.seed, fit.best_epoch, fit.best_val_accuracy};
}

Matrix q_probabilities(const HomophilyEstimator& est, const TextAttributedGraph& g) {
  return softmax_rows(mlp_forward(est.q, feature_matrix(g)).output);
}

std::vector<double> hard_homophily_estimate(const TextAttributedGraph& g, const Matrix& q_probs) {
  std::vector<std::size_t> pred(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) pred[v] = argmax(q_probs.row(v));
  std::vector<double> out(g.num_nodes(), kIsolatedSentinel);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto nbrs = g.neighbors(v);
    if (nbrs.empty()) continue;
    const auto same = std::count_if(nbrs.begin(), nbrs.end(), [&](NodeId u) { return pred[u] == pred[v]; });
    out[v] = static_cast<double>(same) / static_cast<double>(nbrs.size());
  }
  return out;
}

std::vector<double> soft_homophily(const TextAttributedGraph& g, const Matrix& q_probs) {
  const std::size_t C = q_probs.cols();
  std::vector<double> out(g.num_nodes(), kIsolatedSentinel);
  std::vector<double> mean(C);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto nbrs = g.neighbors(v);
    if (nbrs.empty()) continue;
    std::fill(mean.begin(), mean.end(), 0.0);
    for (NodeId u : nbrs) {
      const auto p = q_probs.row(u);
      for (std::size_t k = 0; k < C; ++k) mean[k] += p[k];
    }
    const auto pv = q_probs.row(v);
    double dot = 0.0;
    for (std::size_t k = 0; k < C; ++k) dot += pv[k] * mean[k];
    out[v] = std::clamp(dot / static_cast<double>(nbrs.size()), 0.0, 1.0);
  }
  return out;
}

nlohmann::json estimator_to_json(const HomophilyEstimator& est) {
  return mlp_to_json(est.q, "q-estimator",
                     {{"seed", est.seed}, {"epochs", est.epochs}, {"val_accuracy", est.val_accuracy}});
}

HomophilyEstimator estimator_from_json(const nlohmann::json& j) {
  return {mlp_from_json(j, "q-estimator"), j.value("seed", std::uint64_t{0}), j.value("epochs", 0),
          j.value("val_accuracy", 0.0)};
}

}  // namespace glance
