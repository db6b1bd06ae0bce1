#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "glance/embedding.hpp"
#include "glance/gcn.hpp"
#include "glance/homophily.hpp"
#include "glance/optim.hpp"
#include "glance/prompts.hpp"
#include "glance/refiner.hpp"
#include "glance/router.hpp"
#include "json.hpp"

namespace glance {

struct UncertaintyConfig {
  int passes = 5;
  double rate = 0.3;
  UncertaintyKind kind = UncertaintyKind::entropy;
};

struct GlanceConfig {
  double beta = 0.1;
  double lambda_router = 1.0;
  double lambda_entropy = 0.01;
  BudgetSchedule schedule{32, 8, 0.5};
  int batch_size = 32;
  int k_test = 12;
  std::size_t train_cap = 3000;
  int max_epochs = 20;
  int patience = 2;
  double router_lr = 1e-2;
  double refiner_lr = 1e-3;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  std::size_t refiner_hidden = 128;
  double refiner_dropout = 0.0;
  RouterLossMode router_loss = RouterLossMode::as_written;
  std::set<std::string> ablated_features;
  UncertaintyConfig uncertainty;
  PromptLimits prompts;
  EmbedOptions embed;
  std::vector<std::string> class_names;  // empty = class_<k>
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Per-node signals derived once from the frozen experts.
struct ExpertSignals {
  Matrix z_gnn;   // n x hidden
  Matrix p_gnn;   // n x classes, softmax(H(z_G))
  std::vector<double> uncertainty;
  std::vector<double> soft_homophily;
  std::vector<double> degree;
  Matrix features;
};

// Class names used in prompts; defaults to class_<k>.
std::vector<std::string> resolve_class_names(const GlanceConfig& c, int num_classes);
// Seed for neighbor sampling in prompts. Shared by training and precomputation.
std::uint64_t prompt_seed(const GlanceConfig& c);
// Seed for MC-dropout uncertainty.
std::uint64_t uncertainty_seed(const GlanceConfig& c);

ExpertSignals compute_expert_signals(const TextAttributedGraph& g, const GcnModel& gcn,
                                     const HomophilyEstimator& q, const UncertaintyConfig& u,
                                     std::uint64_t seed);

// Memoized z_L per node. Embedding requests for a set of nodes are issued
// together before any of them is consumed.
class NodeEmbeddingStore {
 public:
  NodeEmbeddingStore(const TextAttributedGraph& g, EmbeddingProvider& provider,
                     std::vector<std::string> class_names, std::uint64_t prompt_seed,
                     PromptLimits limits, EmbedOptions options);

  void ensure(std::span<const NodeId> nodes);
  const std::vector<double>& get(NodeId v) const;
  Matrix rows(std::span<const NodeId> nodes);
  std::size_t dim() const { return 3 * provider_.dim(); }
  EmbeddingProvider& provider() { return provider_; }
  double seconds() const { return seconds_; }

 private:
  const TextAttributedGraph& g_;
  EmbeddingProvider& provider_;
  std::vector<std::string> class_names_;
  std::uint64_t prompt_seed_;
  PromptLimits limits_;
  EmbedOptions options_;
  std::unordered_map<NodeId, std::vector<double>> memo_;
  double seconds_ = 0.0;
};

struct RewardRecord {
  NodeId node = 0;
  bool routed = false;
  double loss_gnn = 0.0;
  std::optional<double> loss_llm;
  double reward = 0.0;
  double score = 0.0;
};

// Signed counterfactual reward.
double reward(bool routed, double loss_gnn, double loss_llm, double beta);

struct BatchResult {
  std::vector<RewardRecord> records;
  std::vector<double> route_losses;  // per record, before λ_router
  double mean_pred_loss = 0.0;
  double mean_route_loss = 0.0;
  double objective = 0.0;  // mean(ℓ_pred) + λ_router mean(ℓ_route)
  std::size_t routed = 0;
};

struct EpochReport {
  int epoch = 0;
  int k = 0;
  std::vector<std::size_t> routed_per_batch;
  std::vector<std::size_t> batch_sizes;
  double mean_reward_routed = 0.0;
  double mean_reward_unrouted = 0.0;
  double mean_objective = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::size_t train_nodes = 0;
  std::size_t provider_calls_train = 0;
  std::size_t provider_calls_val = 0;
  double seconds_experts = 0.0;
  double seconds_provider = 0.0;
  double seconds_router_refiner = 0.0;

  nlohmann::json to_json() const;
};

struct RoutingTrace {
  std::vector<NodeId> nodes;
  std::vector<int> predictions;
  std::vector<bool> routed;
  std::vector<double> scores;
  std::vector<std::size_t> batch_sizes;
  std::size_t routed_count = 0;
  std::size_t provider_calls = 0;  // prompts that reached the backend (cache misses)
};

// Router + refiner over frozen experts. Only `policy()` and `refiner()` change.
class GlanceModel {
 public:
  GlanceModel(const TextAttributedGraph& g, const GcnModel& gcn, const HomophilyEstimator& q,
              EmbeddingProvider& provider, GlanceConfig config);

  // One training step on `batch` with budget k.
  BatchResult batch_step(std::span<const NodeId> batch, int k);

  TrainReport train();

  // Per batch of config.batch_size (in the given order): top-k_test routed
  // nodes take argmax p_C, the rest argmax p_H.
  RoutingTrace predict(std::span<const NodeId> nodes, int k_test);
  // Same batching, but routes by the given per-node scores (aligned with nodes).
  RoutingTrace predict_with_scores(std::span<const NodeId> nodes, int k_test,
                                   std::span<const double> scores);

  std::vector<double> scores(std::span<const NodeId> nodes) const;
  double objective_from_records(const BatchResult& r) const;

  const RouterPolicy& policy() const { return policy_; }
  RouterPolicy& policy() { return policy_; }
  const RefinerModel& refiner() const { return refiner_; }
  RefinerModel& refiner() { return refiner_; }
  const RoutingFeatures& features() const { return features_; }
  const std::map<std::string, ScalarStats>& feature_stats() const { return stats_; }
  const ExpertSignals& signals() const { return signals_; }
  const GlanceConfig& config() const { return config_; }
  NodeEmbeddingStore& store() { return store_; }
  const std::string& gcn_hash() const { return gcn_hash_; }
  const std::string& q_hash() const { return q_hash_; }

  // Throws if an expert's serialized form changed since construction.
  void verify_frozen() const;

 private:
  const TextAttributedGraph& g_;
  const GcnModel& gcn_;
  const HomophilyEstimator& q_;
  GlanceConfig config_;
  ExpertSignals signals_;
  std::map<std::string, ScalarStats> stats_;
  RoutingFeatures features_;
  NodeEmbeddingStore store_;
  RouterPolicy policy_;
  RefinerModel refiner_;
  AdamW router_opt_;
  AdamW refiner_opt_;
  Rng refiner_rng_;
  std::string gcn_hash_;
  std::string q_hash_;
  double seconds_experts_ = 0.0;
};

std::string gcn_hash(const GcnModel& m);
std::string estimator_hash(const HomophilyEstimator& q);

// Bundle directory: router.json, refiner.json, manifest.json.
void save_bundle(const std::filesystem::path& dir, const GlanceModel& model,
                 const TrainReport& report, const nlohmann::json& extra_manifest = {});
// Restores π and C into `model`; throws MissingArtifactError when the
// manifest's expert hashes do not match the model's experts.
void load_bundle(const std::filesystem::path& dir, GlanceModel& model);

}  // namespace glance
