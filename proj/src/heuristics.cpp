#include "glance/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "glance/errors.hpp"
#include "glance/metrics.hpp"
#include "glance/mlp_train.hpp"
#include "glance/rng.hpp"
#include "glance/trainer.hpp"

namespace glance {

using nlohmann::json;

const std::vector<HeuristicKind>& all_heuristics() {
  static const std::vector<HeuristicKind> kinds{
      HeuristicKind::random,      HeuristicKind::c_density, HeuristicKind::degree,
      HeuristicKind::uncertainty, HeuristicKind::soft_h,    HeuristicKind::rel_degree,
      HeuristicKind::true_h};
  return kinds;
}

std::string heuristic_name(HeuristicKind kind) {
  switch (kind) {
    case HeuristicKind::random: return "random";
    case HeuristicKind::degree: return "degree";
    case HeuristicKind::c_density: return "c_density";
    case HeuristicKind::uncertainty: return "uncertainty";
    case HeuristicKind::soft_h: return "soft_h";
    case HeuristicKind::rel_degree: return "rel_degree";
    case HeuristicKind::true_h: return "true_h";
  }
  return "?";
}

HeuristicKind parse_heuristic(const std::string& name) {
  for (auto k : all_heuristics()) {
    if (heuristic_name(k) == name) return k;
  }
  throw ConfigError("unknown heuristic '" + name + "'");
}

RouteDirection default_direction(HeuristicKind kind) {
  return kind == HeuristicKind::uncertainty ? RouteDirection::highest : RouteDirection::lowest;
}

HeuristicMetrics heuristic_metrics(const TextAttributedGraph& g, const ExpertSignals* signals,
                                   bool with_c_density, bool oracle, std::uint64_t seed,
                                   std::vector<std::string>* warnings) {
  HeuristicMetrics m;
  const std::size_t n = g.num_nodes();
  m.degree.resize(n);
  m.rel_degree.resize(n);
  for (NodeId v = 0; v < n; ++v) {
    m.degree[v] = static_cast<double>(g.degree(v));
    m.rel_degree[v] = relative_degree(g, v);
  }
  if (with_c_density) {
    Matrix x(n, g.feature_dim());
    for (NodeId v = 0; v < n; ++v) {
      const auto f = g.feature(v);
      std::copy(f.begin(), f.end(), x.row(v).begin());
    }
    m.c_density = c_density(x, static_cast<std::size_t>(g.num_classes()), seed, 50, warnings);
  }
  if (signals != nullptr) {
    m.uncertainty = signals->uncertainty;
    m.soft_h = signals->soft_homophily;
  }
  if (oracle) m.true_h = local_homophily_all(g);
  return m;
}

std::size_t route_count(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("routing fraction must be in (0, 1]");
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

namespace {

const std::vector<double>* metric_for(const HeuristicMetrics& m, HeuristicKind kind) {
  switch (kind) {
    case HeuristicKind::degree: return &m.degree;
    case HeuristicKind::rel_degree: return &m.rel_degree;
    case HeuristicKind::c_density: return m.c_density ? &*m.c_density : nullptr;
    case HeuristicKind::uncertainty: return m.uncertainty ? &*m.uncertainty : nullptr;
    case HeuristicKind::soft_h: return m.soft_h ? &*m.soft_h : nullptr;
    case HeuristicKind::true_h: return m.true_h ? &*m.true_h : nullptr;
    case HeuristicKind::random: return nullptr;
  }
  return nullptr;
}

std::string missing_reason(HeuristicKind kind) {
  switch (kind) {
    case HeuristicKind::uncertainty: return "uncertainty needs a trained GNN";
    case HeuristicKind::soft_h: return "soft_h needs a trained Q estimator";
    case HeuristicKind::true_h: return "true_h reads labels and requires the oracle-evaluation flag";
    case HeuristicKind::c_density: return "c_density was not computed";
    default: return heuristic_name(kind) + " metric missing";
  }
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::string fmt(const char* pattern, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, x);
  return buf;
}

}  // namespace

std::vector<NodeId> heuristic_route(const HeuristicMetrics& metrics, std::span<const NodeId> eval_nodes,
                                    const HeuristicRouter& router, std::uint64_t seed) {
  const std::size_t count = route_count(router.fraction, eval_nodes.size());
  std::vector<NodeId> out;
  if (router.kind == HeuristicKind::random) {
    Rng rng(seed);
    for (std::size_t pos : rng.sample_without_replacement(eval_nodes.size(), count)) {
      out.push_back(eval_nodes[pos]);
    }
  } else {
    const auto* values = metric_for(metrics, router.kind);
    if (values == nullptr) throw ConfigError(missing_reason(router.kind));
    std::vector<NodeId> order(eval_nodes.begin(), eval_nodes.end());
    const bool low = router.direction == RouteDirection::lowest;
    std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
      const double va = values->at(a);
      const double vb = values->at(b);
      if (va != vb) return low ? va < vb : va > vb;
      return a < b;
    });
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> c_density(const Matrix& x, std::size_t k, std::uint64_t seed, int iterations,
                              std::vector<std::string>* warnings) {
  const std::size_t n = x.rows();
  if (n == 0) return {};
  if (k == 0) throw ConfigError("c_density: k must be >= 1");
  bool degenerate = true;
  for (std::size_t i = 1; i < n && degenerate; ++i) degenerate = sq_dist(x.row(i), x.row(0)) == 0.0;
  if (degenerate) {
    if (warnings) warnings->push_back("c_density: all feature vectors are identical; scores are uniform");
    return std::vector<double>(n, 1.0);
  }
  k = std::min(k, n);
  Rng rng(seed);
  std::vector<std::size_t> seeds{rng.index(n)};
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), x.row(seeds.back())));
      total += d2[i];
    }
    if (total == 0.0) break;  // fewer distinct points than k
    double target = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    seeds.push_back(pick);
  }
  Matrix centroids = select_rows(x, seeds);
  const std::size_t kk = centroids.rows();
  std::vector<std::size_t> assign(n, kk);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(x.row(i), centroids.row(0));
      for (std::size_t c = 1; c < kk; ++c) {
        const double d = sq_dist(x.row(i), centroids.row(c));
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums(kk, x.cols(), 0.0);
    std::vector<std::size_t> counts(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(assign[i]);
      const auto r = x.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < kk; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      auto dst = centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < s.size(); ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kk; ++c) bd = std::min(bd, sq_dist(x.row(i), centroids.row(c)));
    out[i] = 1.0 / (1.0 + std::sqrt(bd));
  }
  return out;
}

LlmPredictor train_llm_predictor(const TextAttributedGraph& g, NodeEmbeddingStore& store,
                                 std::uint64_t seed) {
  const auto train = g.nodes_in(Split::train);
  const auto val = g.nodes_in(Split::val);
  if (train.empty() || val.empty()) throw ConfigError("LLM predictor needs train and val nodes");
  std::vector<NodeId> rows = train;
  rows.insert(rows.end(), val.begin(), val.end());
  const Matrix z = store.rows(rows);
  // Local row index space: train rows then val rows.
  std::vector<int> labels;
  for (NodeId v : rows) labels.push_back(g.label(v));
  std::vector<NodeId> tr(train.size()), va(val.size());
  std::iota(tr.begin(), tr.end(), NodeId{0});
  std::iota(va.begin(), va.end(), train.size());
  Rng init = Rng(seed).split(61);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 300;
  cfg.patience = 30;
  cfg.dropout_rate = 0.0;
  cfg.seed = mix_seed(seed, 62);
  const std::vector<std::size_t> dims{z.cols(), static_cast<std::size_t>(g.num_classes())};
  auto fit = fit_mlp_classifier(MlpModel::create(dims, init), z, labels, tr, va, cfg);
  return {std::move(fit.model), fit.best_val_accuracy};
}

std::vector<int> llm_predict(const LlmPredictor& p, NodeEmbeddingStore& store,
                             std::span<const NodeId> nodes) {
  const Matrix z = store.rows(nodes);
  const auto fwd = mlp_forward(p.head, z, 0.0, nullptr);
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) out.push_back(static_cast<int>(argmax(fwd.output.row(i))));
  return out;
}

HeuristicGrid heuristic_grid(const HeuristicMetrics& metrics, std::span<const NodeId> eval_nodes,
                             const std::vector<bool>& gnn_correct,
                             const std::vector<bool>& post_correct,
                             const std::vector<double>& fractions, std::uint64_t seed) {
  HeuristicGrid grid;
  grid.kinds = all_heuristics();
  grid.fractions = fractions;
  grid.eval_nodes = eval_nodes.size();
  ScoreTable table;
  for (auto kind : grid.kinds) {
    std::vector<std::optional<NcsResult>> row;
    std::vector<std::optional<double>> scores;
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      std::optional<NcsResult> cell;
      const bool available = kind == HeuristicKind::random || metric_for(metrics, kind) != nullptr;
      if (available && route_count(fractions[f], eval_nodes.size()) > 0) {
        const HeuristicRouter router{kind, default_direction(kind), fractions[f]};
        const auto routed = heuristic_route(metrics, eval_nodes, router, mix_seed(seed, f));
        cell = ncs(gnn_correct, post_correct, routed);
      }
      scores.push_back(cell ? std::optional<double>(cell->value) : std::nullopt);
      row.push_back(cell);
    }
    grid.cells.push_back(std::move(row));
    table.push_back(std::move(scores));
  }
  grid.average_ranks = average_rank(table);
  return grid;
}

json HeuristicGrid::to_json() const {
  json rows = json::array();
  for (std::size_t m = 0; m < kinds.size(); ++m) {
    json cells_j = json::array();
    for (const auto& c : cells[m]) {
      if (!c) {
        cells_j.push_back(nullptr);
        continue;
      }
      cells_j.push_back({{"ncs", c->value},
                         {"routed", c->routed},
                         {"wrong_to_correct", c->wrong_to_correct},
                         {"correct_to_wrong", c->correct_to_wrong}});
    }
    rows.push_back({{"heuristic", heuristic_name(kinds[m])},
                    {"direction", default_direction(kinds[m]) == RouteDirection::lowest ? "lowest" : "highest"},
                    {"cells", std::move(cells_j)},
                    {"average_rank", average_ranks[m] ? json(*average_ranks[m]) : json(nullptr)}});
  }
  return json{{"routing_scope", "test split"},
              {"eval_nodes", eval_nodes},
              {"fractions", fractions},
              {"rows", std::move(rows)}};
}

std::string HeuristicGrid::to_text() const {
  std::ostringstream os;
  auto pad = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
  };
  os << pad("heuristic", 12);
  for (double f : fractions) os << pad(fmt("%.0f%%", 100.0 * f), 10);
  os << pad("avg rank", 10) << "\n";
  for (std::size_t m = 0; m < kinds.size(); ++m) {
    os << pad(heuristic_name(kinds[m]), 12);
    for (const auto& c : cells[m]) os << pad(c ? fmt("%.3f", c->value) : "-", 10);
    os << pad(average_ranks[m] ? fmt("%.2f", *average_ranks[m]) : "-", 10) << "\n";
  }
  return os.str();
}

}  // namespace glance
