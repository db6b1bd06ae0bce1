#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glance {

using NodeId = std::size_t;

enum class Split : std::uint8_t { train, val, test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// One input node as read from disk or produced by the generator.
struct NodeRecord {
  std::string text;
  int label = 0;
  std::vector<double> feature;
  std::optional<Split> split;
};

struct BuildStats {
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

// Undirected simple graph whose nodes carry text, a label, a feature vector
// and a split tag. Immutable once built.
class TextAttributedGraph {
 public:
  TextAttributedGraph() = default;

  // Validates records, symmetrizes and deduplicates edges, drops self loops.
  // Nodes without a split are assigned 50/25/25 train/val/test from split_seed.
  static TextAttributedGraph build(std::vector<NodeRecord> nodes, std::span<const Edge> edges,
                                   int num_classes, std::uint64_t split_seed = 0,
                                   BuildStats* stats = nullptr);

  std::size_t num_nodes() const { return labels_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  int num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }

  // Canonical edge list: u < v, sorted lexicographically.
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  bool is_isolated(NodeId v) const { return degree(v) == 0; }

  const std::string& text(NodeId v) const { return texts_[v]; }
  int label(NodeId v) const { return labels_[v]; }
  const std::vector<int>& labels() const { return labels_; }
  std::span<const double> feature(NodeId v) const {
    return {features_.data() + v * feature_dim_, feature_dim_};
  }
  Split split(NodeId v) const { return splits_[v]; }
  const std::vector<Split>& splits() const { return splits_; }

  std::vector<NodeId> nodes_in(Split s) const;

  // Same nodes with every edge removed.
  TextAttributedGraph without_edges() const;

  std::vector<NodeRecord> records() const;

 private:
  int num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<std::string> texts_;
  std::vector<int> labels_;
  std::vector<double> features_;
  std::vector<Split> splits_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
};

// Seeded 50/25/25 train/val/test assignment over n nodes.
std::vector<Split> random_splits(std::size_t n, std::uint64_t seed);

}  // namespace glance
