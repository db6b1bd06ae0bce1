#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "glance/graph.hpp"

namespace glance {

// Value reported for h_v and relative degree on isolated nodes, where the
// neighbor averages are undefined. Isolated nodes are excluded from
// stratified reports.
inline constexpr double kIsolatedSentinel = 1.0;

struct NodeStructuralMetrics {
  std::size_t degree = 0;
  double local_homophily = kIsolatedSentinel;
  double relative_degree = kIsolatedSentinel;
};

// Fraction of v's neighbors sharing v's label.
double local_homophily(const TextAttributedGraph& g, NodeId v);

// Mean over neighbors u of sqrt((d_v + 1) / (d_u + 1)).
double relative_degree(const TextAttributedGraph& g, NodeId v);

std::vector<NodeStructuralMetrics> structural_metrics(const TextAttributedGraph& g);
std::vector<double> local_homophily_all(const TextAttributedGraph& g);

// Homophily bins: half-open [a, b) except the last bin, which is closed.
inline const std::vector<double> kDefaultBinEdges{0.0, 0.25, 0.5, 0.75, 1.0};

std::size_t bin_index(double value, std::span<const double> edges = kDefaultBinEdges);
std::vector<std::size_t> stratify_bins(std::span<const double> values,
                                       std::span<const double> edges = kDefaultBinEdges);

struct HopNode {
  NodeId node = 0;
  int hop = 1;
  friend bool operator==(const HopNode&, const HopNode&) = default;
};

// Capped neighborhood sample. Hop 1 draws up to `per_node_cap` neighbors of v
// uniformly without replacement; for k = 2 each sampled hop-1 node then
// contributes up to `per_node_cap` of its own neighbors, excluding v and any
// node already selected. Hop-1 entries precede hop-2 entries.
std::vector<HopNode> sample_khop(const TextAttributedGraph& g, NodeId v, int k,
                                 std::size_t per_node_cap, std::uint64_t seed);

}  // namespace glance
