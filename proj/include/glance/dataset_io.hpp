#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "glance/graph.hpp"

namespace glance {

// Fills a missing feature vector from node text (e.g. an embedding provider).
using FeatureFiller = std::function<std::vector<double>(const std::string& text)>;

struct IngestOptions {
  // 0 infers max(label) + 1.
  int num_classes = 0;
  std::uint64_t split_seed = 0;
  FeatureFiller fill_missing_features;
};

// Nodes: JSON Lines {"id", "text", "label", "feature", "split"?}; ids must
// cover 0..n-1. Edges: CSV with header "src,dst".
TextAttributedGraph ingest_dataset(const std::filesystem::path& nodes_path,
                                   const std::filesystem::path& edges_path,
                                   const IngestOptions& options = {},
                                   BuildStats* stats = nullptr);

std::vector<NodeRecord> read_nodes_jsonl(const std::filesystem::path& path,
                                         const FeatureFiller& fill_missing = {});
std::vector<Edge> read_edges_csv(const std::filesystem::path& path);

void write_nodes_jsonl(const TextAttributedGraph& g, const std::filesystem::path& path);
void write_edges_csv(const TextAttributedGraph& g, const std::filesystem::path& path);

}  // namespace glance
