#include "glance/metrics.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "glance/errors.hpp"
#include "glance/rng.hpp"

namespace glance {

double local_homophily(const TextAttributedGraph& g, NodeId v) {
  const auto nbrs = g.neighbors(v);
  if (nbrs.empty()) return kIsolatedSentinel;
  std::size_t same = 0;
  for (NodeId u : nbrs) same += g.label(u) == g.label(v) ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(nbrs.size());
}

double relative_degree(const TextAttributedGraph& g, NodeId v) {
  const auto nbrs = g.neighbors(v);
  if (nbrs.empty()) return kIsolatedSentinel;
  const double dv = static_cast<double>(nbrs.size()) + 1.0;
  double acc = 0.0;
  for (NodeId u : nbrs) acc += std::sqrt(dv / (static_cast<double>(g.degree(u)) + 1.0));
  return acc / static_cast<double>(nbrs.size());
}

std::vector<NodeStructuralMetrics> structural_metrics(const TextAttributedGraph& g) {
  std::vector<NodeStructuralMetrics> out(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    out[v] = {g.degree(v), local_homophily(g, v), relative_degree(g, v)};
  }
  return out;
}

std::vector<double> local_homophily_all(const TextAttributedGraph& g) {
  std::vector<double> out(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) out[v] = local_homophily(g, v);
  return out;
}

std::size_t bin_index(double value, std::span<const double> edges) {
  if (edges.size() < 2) throw ConfigError("bin edges need at least two values");
  if (!(value >= edges.front() && value <= edges.back())) {
    throw ConfigError("value " + std::to_string(value) + " outside bin range");
  }
  const std::size_t bins = edges.size() - 1;
  for (std::size_t b = 0; b + 1 < bins; ++b) {
    if (value < edges[b + 1]) return b;
  }
  return bins - 1;
}

std::vector<std::size_t> stratify_bins(std::span<const double> values,
                                       std::span<const double> edges) {
  std::vector<std::size_t> out;
  out.reserve(values.size());
  for (double x : values) out.push_back(bin_index(x, edges));
  return out;
}

namespace {

std::vector<NodeId> draw(std::span<const NodeId> candidates, std::size_t cap, Rng& rng) {
  std::vector<NodeId> out;
  for (std::size_t pos : rng.sample_without_replacement(candidates.size(), cap)) {
    out.push_back(candidates[pos]);
  }
  return out;
}

}  // namespace

std::vector<HopNode> sample_khop(const TextAttributedGraph& g, NodeId v, int k,
                                 std::size_t per_node_cap, std::uint64_t seed) {
  if (k < 1 || k > 2) throw ConfigError("sample_khop supports k in {1, 2}");
  if (per_node_cap < 1) throw ConfigError("per_node_cap must be >= 1");
  Rng rng(mix_seed(seed, v));
  std::vector<HopNode> out;
  const auto hop1 = draw(g.neighbors(v), per_node_cap, rng);
  std::unordered_set<NodeId> selected(hop1.begin(), hop1.end());
  selected.insert(v);
  for (NodeId u : hop1) out.push_back({u, 1});
  if (k == 1) return out;

  std::vector<NodeId> candidates;
  for (NodeId u : hop1) {
    candidates.clear();
    for (NodeId w : g.neighbors(u)) {
      if (!selected.contains(w)) candidates.push_back(w);
    }
    for (NodeId w : draw(candidates, per_node_cap, rng)) {
      selected.insert(w);
      out.push_back({w, 2});
    }
  }
  return out;
}

}  // namespace glance
