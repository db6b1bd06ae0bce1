#include "glance/graph.hpp"

#include <algorithm>
#include <numeric>

#include "glance/errors.hpp"
#include "glance/rng.hpp"

namespace glance {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::vector<Split> random_splits(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = n / 2;
  const std::size_t n_val = n / 4;
  std::vector<Split> out(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      out[order[i]] = Split::train;
    } else if (i < n_train + n_val) {
      out[order[i]] = Split::val;
    }
  }
  return out;
}

TextAttributedGraph TextAttributedGraph::build(std::vector<NodeRecord> nodes,
                                               std::span<const Edge> edges, int num_classes,
                                               std::uint64_t split_seed, BuildStats* stats) {
  if (num_classes <= 0) throw DataError("num_classes must be positive");
  TextAttributedGraph g;
  const std::size_t n = nodes.size();
  g.num_classes_ = num_classes;
  g.feature_dim_ = n ? nodes.front().feature.size() : 0;
  g.texts_.reserve(n);
  g.labels_.reserve(n);
  g.features_.reserve(n * g.feature_dim_);

  std::vector<std::size_t> missing_split;
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = nodes[i];
    if (rec.feature.size() != g.feature_dim_) {
      throw DataError("node " + std::to_string(i) + ": feature dimension " +
                      std::to_string(rec.feature.size()) + " != " + std::to_string(g.feature_dim_));
    }
    if (rec.label < 0 || rec.label >= num_classes) {
      throw DataError("node " + std::to_string(i) + ": label " + std::to_string(rec.label) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    }
    g.texts_.push_back(std::move(rec.text));
    g.labels_.push_back(rec.label);
    g.features_.insert(g.features_.end(), rec.feature.begin(), rec.feature.end());
    g.splits_.push_back(rec.split.value_or(Split::train));
    if (!rec.split) missing_split.push_back(i);
  }
  if (!missing_split.empty()) {
    const auto assigned = random_splits(missing_split.size(), split_seed);
    for (std::size_t j = 0; j < missing_split.size(); ++j) {
      g.splits_[missing_split[j]] = assigned[j];
    }
  }

  BuildStats local;
  std::vector<Edge> canon;
  canon.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.u >= n || e.v >= n) {
      throw DataError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                      ") references a missing node");
    }
    if (e.u == e.v) {
      ++local.self_loops;
      continue;
    }
    canon.push_back({std::min(e.u, e.v), std::max(e.u, e.v)});
  }
  std::sort(canon.begin(), canon.end(),
            [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
  const auto last = std::unique(canon.begin(), canon.end());
  local.duplicates = static_cast<std::size_t>(canon.end() - last);
  canon.erase(last, canon.end());
  g.edges_ = std::move(canon);

  std::vector<std::size_t> deg(n, 0);
  for (const Edge& e : g.edges_) {
    ++deg[e.u];
    ++deg[e.v];
  }
  g.offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + deg[i];
  g.adjacency_.assign(g.offsets_[n], 0);
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const Edge& e : g.edges_) {
    g.adjacency_[cursor[e.u]++] = e.v;
    g.adjacency_[cursor[e.v]++] = e.u;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i]),
              g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i + 1]));
  }
  if (stats) *stats = local;
  return g;
}

std::vector<NodeId> TextAttributedGraph::nodes_in(Split s) const {
  std::vector<NodeId> out;
  for (NodeId v = 0; v < num_nodes(); ++v) {
    if (splits_[v] == s) out.push_back(v);
  }
  return out;
}

TextAttributedGraph TextAttributedGraph::without_edges() const {
  TextAttributedGraph g = *this;
  g.edges_.clear();
  g.adjacency_.clear();
  g.offsets_.assign(num_nodes() + 1, 0);
  return g;
}

std::vector<NodeRecord> TextAttributedGraph::records() const {
  std::vector<NodeRecord> out(num_nodes());
  for (NodeId v = 0; v < num_nodes(); ++v) {
    auto f = feature(v);
    out[v] = {texts_[v], labels_[v], {f.begin(), f.end()}, splits_[v]};
  }
  return out;
}

}  // namespace glance
