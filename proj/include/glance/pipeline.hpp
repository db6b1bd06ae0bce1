#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glance/config.hpp"
#include "glance/embedding.hpp"
#include "glance/eval.hpp"
#include "glance/gcn.hpp"
#include "glance/heuristics.hpp"
#include "glance/homophily.hpp"
#include "glance/synth.hpp"
#include "glance/trainer.hpp"
#include "json.hpp"

namespace glance {

inline constexpr const char* kVersion = "0.1.0";

// Output layout under RunConfig::out.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path nodes() const { return root / "data" / "nodes.jsonl"; }
  std::filesystem::path edges() const { return root / "data" / "edges.csv"; }
  std::filesystem::path gcn() const { return root / "experts" / "gcn.json"; }
  std::filesystem::path q() const { return root / "experts" / "q.json"; }
  std::filesystem::path cache() const { return root / "cache" / "embeddings.jsonl"; }
  std::filesystem::path bundle() const { return root / "glance"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path resolved_config() const { return root / "config.resolved.json"; }
};

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& cfg, int num_classes);

struct EvalOptions {
  std::optional<int> k_test;
  std::optional<std::vector<double>> bin_edges;
  bool oracle_h = false;  // also report routing by lowest true homophily
};

struct EmbedOptionsCli {
  std::vector<Split> splits{Split::train, Split::val, Split::test};
  int max_in_flight = 4;
};

struct EvalOutcome {
  EvalReport report;
  std::optional<EvalReport> oracle_report;
  std::filesystem::path path;
};

// Each command reads upstream artifacts from the output directory, writes its
// own artifacts there, and records hashes and timings in manifest.json.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return cfg_; }
  const RunPaths& paths() const { return paths_; }

  SynthResult gen();
  GnnTrainResult train_gnn();
  HomophilyEstimator train_q();
  nlohmann::json embed(const EmbedOptionsCli& options);
  TrainReport train_glance();
  EvalOutcome eval(const EvalOptions& options);
  HeuristicGrid heuristics(bool oracle_h);
  nlohmann::json ablate();
  nlohmann::json sweep_gnn();
  nlohmann::json sweep_beta();

  // Loaders; throw MissingArtifactError naming the absent file.
  TextAttributedGraph load_graph(EmbeddingProvider* provider = nullptr) const;
  GcnModel load_gcn() const;
  HomophilyEstimator load_q() const;

  // Backend prompts sent by the most recent command.
  std::size_t last_backend_calls() const { return last_backend_calls_; }

 private:
  struct Trained {
    TrainReport report;
    EvalReport eval;
  };
  Trained train_and_eval(const TextAttributedGraph& g, const GcnModel& gcn,
                         const HomophilyEstimator& q, EmbeddingProvider& provider,
                         const GlanceConfig& gc, const std::filesystem::path& bundle_dir);
  void record(const std::string& command, const nlohmann::json& timings,
              const std::vector<std::filesystem::path>& artifacts);
  void write_resolved_config() const;

  RunConfig cfg_;
  RunPaths paths_;
  std::size_t last_backend_calls_ = 0;
};

EvalReport evaluate_trace(const TextAttributedGraph& g, const GlanceModel& model,
                          const RoutingTrace& trace, int k_test, std::span<const double> bin_edges);

}  // namespace glance
