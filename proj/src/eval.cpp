#include "glance/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "glance/errors.hpp"

namespace glance {

using nlohmann::json;

NcsResult ncs(const std::vector<bool>& gnn_correct, const std::vector<bool>& post_correct,
              std::span<const NodeId> routed) {
  if (routed.empty()) throw ConfigError("NCS needs a nonempty routed set");
  NcsResult r;
  r.routed = routed.size();
  for (NodeId v : routed) {
    if (v >= gnn_correct.size() || v >= post_correct.size()) {
      throw ConfigError("NCS: routed node " + std::to_string(v) + " has no correctness flag");
    }
    if (!gnn_correct[v] && post_correct[v]) ++r.wrong_to_correct;
    if (gnn_correct[v] && !post_correct[v]) ++r.correct_to_wrong;
  }
  r.value = (static_cast<double>(r.wrong_to_correct) - static_cast<double>(r.correct_to_wrong)) /
            static_cast<double>(r.routed);
  return r;
}

std::vector<BinAccuracy> stratified_accuracy(std::span<const int> predictions,
                                             std::span<const int> labels,
                                             std::span<const double> h_values,
                                             std::span<const double> edges) {
  if (predictions.size() != labels.size() || labels.size() != h_values.size()) {
    throw ConfigError("stratified_accuracy: arrays have different lengths");
  }
  if (edges.size() < 2) throw ConfigError("stratified_accuracy: need at least two bin edges");
  std::vector<BinAccuracy> bins(edges.size() - 1);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = edges[b + 1];
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& bin = bins[bin_index(h_values[i], edges)];
    ++bin.population;
    if (predictions[i] == labels[i]) ++bin.correct;
  }
  for (auto& b : bins) {
    if (b.population > 0) b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.population);
  }
  return bins;
}

std::vector<std::optional<double>> average_rank(const ScoreTable& scores) {
  if (scores.empty()) throw ConfigError("average_rank: empty table");
  const std::size_t settings = scores.front().size();
  for (const auto& row : scores) {
    if (row.size() != settings) throw ConfigError("average_rank: ragged table");
  }
  if (settings == 0) throw ConfigError("average_rank: table has no settings");
  std::vector<double> sum(scores.size(), 0.0);
  std::vector<std::size_t> count(scores.size(), 0);
  for (std::size_t s = 0; s < settings; ++s) {
    std::vector<std::size_t> present;
    for (std::size_t m = 0; m < scores.size(); ++m) {
      if (scores[m][s]) present.push_back(m);
    }
    std::sort(present.begin(), present.end(),
              [&](std::size_t a, std::size_t b) { return *scores[a][s] > *scores[b][s]; });
    for (std::size_t i = 0; i < present.size();) {
      std::size_t j = i;
      while (j < present.size() && *scores[present[j]][s] == *scores[present[i]][s]) ++j;
      // positions i..j-1 share ranks i+1..j
      const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t t = i; t < j; ++t) {
        sum[present[t]] += rank;
        ++count[present[t]];
      }
      i = j;
    }
  }
  std::vector<std::optional<double>> out(scores.size());
  for (std::size_t m = 0; m < scores.size(); ++m) {
    if (count[m] > 0) out[m] = sum[m] / static_cast<double>(count[m]);
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

HomophilyGroupSummary summarize(const std::vector<double>& h) {
  HomophilyGroupSummary s;
  s.count = h.size();
  s.median = median(h);
  s.histogram.assign(10, 0);
  for (double x : h) {
    const auto b = std::min<std::size_t>(9, static_cast<std::size_t>(std::max(0.0, x) * 10.0));
    ++s.histogram[b];
  }
  return s;
}

json summary_json(const std::optional<HomophilyGroupSummary>& s) {
  if (!s) return nullptr;
  return json{{"count", s->count}, {"median", s->median}, {"histogram", s->histogram}};
}

json bin_json(const BinAccuracy& b) {
  return json{{"lo", b.lo},
              {"hi", b.hi},
              {"population", b.population},
              {"correct", b.correct},
              {"accuracy", b.accuracy ? json(*b.accuracy) : json(nullptr)}};
}

std::string fmt(const char* pattern, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, x);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

}  // namespace

RoutedHomophilySummary routed_homophily_summary(std::span<const NodeId> routed,
                                                const std::vector<bool>& benefited,
                                                std::span<const double> h_values) {
  if (benefited.size() != routed.size() || h_values.size() != routed.size()) {
    throw ConfigError("routed_homophily_summary: arrays have different lengths");
  }
  std::vector<double> yes, no;
  for (std::size_t i = 0; i < routed.size(); ++i) (benefited[i] ? yes : no).push_back(h_values[i]);
  RoutedHomophilySummary out;
  if (!yes.empty()) out.benefited = summarize(yes);
  if (!no.empty()) out.rest = summarize(no);
  return out;
}

json bins_to_json(const std::vector<BinAccuracy>& bins) {
  json arr = json::array();
  for (const auto& b : bins) arr.push_back(bin_json(b));
  return arr;
}

EvalReport build_eval_report(const TextAttributedGraph& g, const EvalInputs& in,
                             std::span<const double> edges) {
  const std::size_t n = in.nodes.size();
  if (in.gnn_predictions.size() != n || in.final_predictions.size() != n || in.routed.size() != n) {
    throw ConfigError("eval: prediction arrays are not aligned with the node list");
  }
  if (n == 0) throw ConfigError("eval: no nodes to evaluate");
  EvalReport r;
  r.split = in.split;
  r.k_test = in.k_test;
  r.nodes = n;
  r.provider_calls = in.provider_calls;
  r.bin_edges.assign(edges.begin(), edges.end());

  std::vector<int> pred, gpred, labels;
  std::vector<double> h;
  std::vector<bool> gnn_ok(g.num_nodes(), false), post_ok(g.num_nodes(), false);
  std::vector<NodeId> routed;
  std::vector<bool> benefited;
  std::vector<double> routed_h;
  std::size_t hit = 0, ghit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId v = in.nodes[i];
    const int y = g.label(v);
    hit += in.final_predictions[i] == y;
    ghit += in.gnn_predictions[i] == y;
    gnn_ok[v] = in.gnn_predictions[i] == y;
    post_ok[v] = in.final_predictions[i] == y;
    const bool isolated = g.is_isolated(v);
    if (in.routed[i]) {
      routed.push_back(v);
      if (!isolated) {
        routed_h.push_back(local_homophily(g, v));
        benefited.push_back(!gnn_ok[v] && post_ok[v]);
      }
    }
    if (isolated) {
      ++r.isolated_excluded;
      continue;
    }
    pred.push_back(in.final_predictions[i]);
    gpred.push_back(in.gnn_predictions[i]);
    labels.push_back(y);
    h.push_back(local_homophily(g, v));
  }
  r.accuracy = static_cast<double>(hit) / static_cast<double>(n);
  r.gnn_accuracy = static_cast<double>(ghit) / static_cast<double>(n);
  r.bins = stratified_accuracy(pred, labels, h, edges);
  r.gnn_bins = stratified_accuracy(gpred, labels, h, edges);
  r.routed = routed.size();
  if (!routed.empty()) r.routed_ncs = ncs(gnn_ok, post_ok, routed);
  std::vector<NodeId> routed_connected;
  for (NodeId v : routed) {
    if (!g.is_isolated(v)) routed_connected.push_back(v);
  }
  r.routed_homophily = routed_homophily_summary(routed_connected, benefited, routed_h);
  if (!routed_h.empty()) r.median_h_routed = median(routed_h);
  std::vector<double> all_h;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (!g.is_isolated(v)) all_h.push_back(local_homophily(g, v));
  }
  if (!all_h.empty()) r.median_h_all = median(all_h);
  return r;
}

json EvalReport::to_json() const {
  json j{{"split", split},
         {"routing_scope", "per-batch top-k within the " + split + " split"},
         {"k_test", k_test},
         {"precision", "float64"},
         {"nodes", nodes},
         {"isolated_excluded", isolated_excluded},
         {"accuracy", accuracy},
         {"gnn_accuracy", gnn_accuracy},
         {"bin_edges", bin_edges},
         {"bins", bins_to_json(bins)},
         {"gnn_bins", bins_to_json(gnn_bins)},
         {"routed", routed},
         {"provider_calls", provider_calls},
         {"median_h_all", median_h_all},
         {"median_h_routed", median_h_routed ? json(*median_h_routed) : json(nullptr)},
         {"routed_homophily",
          {{"benefited", summary_json(routed_homophily.benefited)},
           {"rest", summary_json(routed_homophily.rest)}}}};
  if (routed_ncs) {
    j["ncs"] = {{"value", routed_ncs->value},
                {"routed", routed_ncs->routed},
                {"wrong_to_correct", routed_ncs->wrong_to_correct},
                {"correct_to_wrong", routed_ncs->correct_to_wrong}};
  } else {
    j["ncs"] = nullptr;
  }
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "split " << split << "  k_test " << k_test << "  nodes " << nodes << "  routed " << routed
     << "  provider_calls " << provider_calls << "  precision float64\n";
  os << pad("model", 8);
  for (const auto& b : bins) os << pad(fmt("%.2f", b.lo) + "-" + fmt("%.2f", b.hi), 12);
  os << pad("overall", 10) << "\n";
  auto row = [&](const std::string& name, const std::vector<BinAccuracy>& bs, double overall) {
    os << pad(name, 8);
    for (const auto& b : bs) os << pad(b.accuracy ? fmt("%.1f", 100.0 * *b.accuracy) : "-", 12);
    os << pad(fmt("%.1f", 100.0 * overall), 10) << "\n";
  };
  row("gnn", gnn_bins, gnn_accuracy);
  row("glance", bins, accuracy);
  os << pad("n", 8);
  for (const auto& b : bins) os << pad(std::to_string(b.population), 12);
  os << pad(std::to_string(nodes - isolated_excluded), 10) << "\n";
  if (routed_ncs) os << "ncs " << fmt("%.4f", routed_ncs->value) << "\n";
  os << "median h: all " << fmt("%.4f", median_h_all);
  if (median_h_routed) os << "  routed " << fmt("%.4f", *median_h_routed);
  os << "\n";
  return os.str();
}

}  // namespace glance
