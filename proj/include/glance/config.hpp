#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glance/gcn.hpp"
#include "glance/homophily.hpp"
#include "glance/metrics.hpp"
#include "glance/synth.hpp"
#include "glance/trainer.hpp"
#include "json.hpp"

namespace glance {

struct DataConfig {
  std::filesystem::path nodes;  // empty = <out>/data/nodes.jsonl written by gen
  std::filesystem::path edges;
  int num_classes = 0;          // 0 = infer
  // Fill missing node features with the provider's embedding of the node text.
  bool fill_features_from_provider = false;
};

struct ProviderConfig {
  std::string kind = "mock";  // mock | http
  std::size_t dim = 32;
  std::uint64_t mock_seed = 7;
  int words_per_class = 16;   // mock vocabulary; must match the generator's
  std::string endpoint;
  std::string model;
  int max_retries = 3;
  int backoff_ms = 200;
  int timeout_s = 60;
  std::size_t request_batch = 64;
  std::optional<std::filesystem::path> cache;  // default <out>/cache/embeddings.jsonl
  bool use_cache_file = true;
};

struct EvalConfig {
  std::vector<double> bin_edges = kDefaultBinEdges;
  std::vector<double> heuristic_fractions{0.10, 0.15, 0.20};
};

struct SweepConfig {
  std::vector<double> learning_rates{1e-2, 1e-3, 1e-4};
  std::vector<double> weight_decays{1e-3, 1e-4, 1e-5};
  std::vector<double> betas{0.1, 0.2, 0.3};
};

// Seeds for each component are derived from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  DataConfig data;
  SynthConfig synth;
  GnnConfig gnn;
  QConfig q;
  ProviderConfig provider;
  GlanceConfig glance;
  EvalConfig eval;
  SweepConfig sweep;

  std::uint64_t data_seed() const;
  std::uint64_t gnn_seed() const;
  std::uint64_t q_seed() const;
  std::uint64_t router_seed() const;

  void validate() const;
};

// Unknown keys anywhere raise ConfigError naming the key path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved form; parse_run_config(to_json(c)) reproduces c.
nlohmann::json run_config_to_json(const RunConfig& c);

}  // namespace glance
