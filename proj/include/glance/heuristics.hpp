#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glance/eval.hpp"
#include "glance/graph.hpp"
#include "glance/matrix.hpp"
#include "glance/mlp.hpp"
#include "json.hpp"

namespace glance {

class NodeEmbeddingStore;
struct ExpertSignals;

enum class HeuristicKind { random, degree, c_density, uncertainty, soft_h, rel_degree, true_h };
enum class RouteDirection { lowest, highest };

const std::vector<HeuristicKind>& all_heuristics();
std::string heuristic_name(HeuristicKind kind);
HeuristicKind parse_heuristic(const std::string& name);
// Low degree, density, soft ĥ, relative degree and true h are routed; so is high uncertainty.
RouteDirection default_direction(HeuristicKind kind);

struct HeuristicRouter {
  HeuristicKind kind = HeuristicKind::random;
  RouteDirection direction = RouteDirection::lowest;
  double fraction = 0.1;  // in (0, 1]
};

// Per-node metric values; a missing vector means the dependency is unavailable.
struct HeuristicMetrics {
  std::vector<double> degree;
  std::vector<double> rel_degree;
  std::optional<std::vector<double>> c_density;
  std::optional<std::vector<double>> uncertainty;
  std::optional<std::vector<double>> soft_h;
  std::optional<std::vector<double>> true_h;  // reads labels; evaluation only
};

// Structural metrics always; expert metrics when `signals` is given; true h
// only with `oracle`.
HeuristicMetrics heuristic_metrics(const TextAttributedGraph& g, const ExpertSignals* signals,
                                   bool with_c_density, bool oracle, std::uint64_t seed,
                                   std::vector<std::string>* warnings = nullptr);

// ⌊fraction · n⌋, guarded against representation error.
std::size_t route_count(double fraction, std::size_t n);

// Routed node ids (ascending) among `eval_nodes`.
std::vector<NodeId> heuristic_route(const HeuristicMetrics& metrics, std::span<const NodeId> eval_nodes,
                                    const HeuristicRouter& router, std::uint64_t seed);

// 1 / (1 + distance to the nearest k-means centroid). k-means++ init.
std::vector<double> c_density(const Matrix& x, std::size_t k, std::uint64_t seed,
                              int iterations = 50, std::vector<std::string>* warnings = nullptr);

// The embedding expert used as a standalone predictor: softmax regression on z_L.
struct LlmPredictor {
  MlpModel head;
  double val_accuracy = 0.0;
};

LlmPredictor train_llm_predictor(const TextAttributedGraph& g, NodeEmbeddingStore& store,
                                 std::uint64_t seed);
std::vector<int> llm_predict(const LlmPredictor& p, NodeEmbeddingStore& store,
                             std::span<const NodeId> nodes);

struct HeuristicGrid {
  std::vector<HeuristicKind> kinds;
  std::vector<double> fractions;
  std::size_t eval_nodes = 0;
  std::vector<std::vector<std::optional<NcsResult>>> cells;  // kinds x fractions
  std::vector<std::optional<double>> average_ranks;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Flags are indexed by node id.
HeuristicGrid heuristic_grid(const HeuristicMetrics& metrics, std::span<const NodeId> eval_nodes,
                             const std::vector<bool>& gnn_correct,
                             const std::vector<bool>& post_correct,
                             const std::vector<double>& fractions, std::uint64_t seed);

}  // namespace glance
