#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glance/graph.hpp"
#include "glance/metrics.hpp"
#include "json.hpp"

namespace glance {

struct NcsResult {
  std::size_t routed = 0;
  std::size_t wrong_to_correct = 0;
  std::size_t correct_to_wrong = 0;
  double value = 0.0;
};

// Flags are indexed by node id; only nodes in `routed` are read.
NcsResult ncs(const std::vector<bool>& gnn_correct, const std::vector<bool>& post_correct,
              std::span<const NodeId> routed);

struct BinAccuracy {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t population = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // absent when population == 0
};

// Arrays are aligned per evaluated node.
std::vector<BinAccuracy> stratified_accuracy(std::span<const int> predictions,
                                             std::span<const int> labels,
                                             std::span<const double> h_values,
                                             std::span<const double> edges = kDefaultBinEdges);

// scores[m][s] for method m in setting s; higher is better. Absent cells are
// left out of that setting's ranking and out of the method's mean.
using ScoreTable = std::vector<std::vector<std::optional<double>>>;
std::vector<std::optional<double>> average_rank(const ScoreTable& scores);

struct HomophilyGroupSummary {
  std::size_t count = 0;
  double median = 0.0;
  std::vector<std::size_t> histogram;  // 10 equal bins over [0, 1]
};

struct RoutedHomophilySummary {
  std::optional<HomophilyGroupSummary> benefited;
  std::optional<HomophilyGroupSummary> rest;
};

double median(std::vector<double> values);

// `benefited` and `h_values` are aligned with `routed`.
RoutedHomophilySummary routed_homophily_summary(std::span<const NodeId> routed,
                                                const std::vector<bool>& benefited,
                                                std::span<const double> h_values);

struct EvalInputs {
  std::vector<NodeId> nodes;
  std::vector<int> gnn_predictions;    // aligned with nodes
  std::vector<int> final_predictions;  // aligned with nodes
  std::vector<bool> routed;            // aligned with nodes
  std::size_t provider_calls = 0;
  int k_test = 0;
  std::string split = "test";
};

struct EvalReport {
  std::string split;
  int k_test = 0;
  std::size_t nodes = 0;
  std::size_t isolated_excluded = 0;
  double accuracy = 0.0;
  double gnn_accuracy = 0.0;
  std::vector<double> bin_edges;
  std::vector<BinAccuracy> bins;
  std::vector<BinAccuracy> gnn_bins;
  std::size_t routed = 0;
  std::optional<NcsResult> routed_ncs;
  RoutedHomophilySummary routed_homophily;
  double median_h_all = 0.0;
  std::optional<double> median_h_routed;
  std::size_t provider_calls = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

EvalReport build_eval_report(const TextAttributedGraph& g, const EvalInputs& in,
                             std::span<const double> edges = kDefaultBinEdges);

nlohmann::json bins_to_json(const std::vector<BinAccuracy>& bins);

}  // namespace glance
