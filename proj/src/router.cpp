#include "glance/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"

namespace glance {

using nlohmann::json;

const std::vector<std::string>& routing_segment_names() {
  static const std::vector<std::string> names{kSegGnnEmbedding, kSegUncertainty, kSegSoftHomophily,
                                              kSegFeatures, kSegDegree};
  return names;
}

bool is_scalar_segment(const std::string& name) {
  return name == kSegUncertainty || name == kSegSoftHomophily || name == kSegDegree;
}

FeatureLayout::FeatureLayout(const std::vector<std::pair<std::string, std::size_t>>& segments) {
  for (const auto& [name, dim] : segments) {
    if (find(name)) throw ConfigError("duplicate layout segment " + name);
    segments_.push_back({name, total_, dim});
    total_ += dim;
  }
}

const LayoutSegment* FeatureLayout::find(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

json FeatureLayout::to_json() const {
  json arr = json::array();
  for (const auto& s : segments_) arr.push_back({{"name", s.name}, {"dim", s.dim}});
  return arr;
}

FeatureLayout FeatureLayout::from_json(const json& j) {
  std::vector<std::pair<std::string, std::size_t>> segs;
  for (const auto& s : j) segs.emplace_back(s.at("name").get<std::string>(), s.at("dim").get<std::size_t>());
  return FeatureLayout(segs);
}

std::map<std::string, ScalarStats> scalar_stats(const RouterInputs& in, std::span<const NodeId> rows) {
  if (rows.empty()) throw ConfigError("scalar_stats: no rows");
  auto stats_of = [&](std::span<const double> v) {
    double mean = 0.0;
    for (NodeId r : rows) mean += v[r];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (NodeId r : rows) var += (v[r] - mean) * (v[r] - mean);
    var /= static_cast<double>(rows.size());
    return ScalarStats{mean, std::max(std::sqrt(var), 1e-6)};
  };
  return {{kSegUncertainty, stats_of(in.uncertainty)},
          {kSegSoftHomophily, stats_of(in.soft_homophily)},
          {kSegDegree, stats_of(in.degree)}};
}

RoutingFeatures assemble_features(const RouterInputs& in,
                                  const std::map<std::string, ScalarStats>& stats,
                                  const std::set<std::string>& ablated) {
  if (!in.gnn_embedding || !in.features) throw ConfigError("assemble_features: missing matrix input");
  const std::size_t n = in.gnn_embedding->rows();
  if (in.features->rows() != n || in.uncertainty.size() != n || in.soft_homophily.size() != n ||
      in.degree.size() != n) {
    throw ConfigError("assemble_features: inputs disagree on node count");
  }
  for (const auto& a : ablated) {
    const auto& names = routing_segment_names();
    if (std::find(names.begin(), names.end(), a) == names.end()) {
      throw ConfigError("unknown routing feature '" + a + "'");
    }
  }
  std::vector<std::pair<std::string, std::size_t>> segs;
  for (const auto& name : routing_segment_names()) {
    if (ablated.contains(name)) continue;
    std::size_t dim = 1;
    if (name == kSegGnnEmbedding) dim = in.gnn_embedding->cols();
    if (name == kSegFeatures) dim = in.features->cols();
    segs.emplace_back(name, dim);
  }
  RoutingFeatures out{FeatureLayout(segs), Matrix()};
  out.values = Matrix(n, out.layout.total_dim());
  for (const auto& seg : out.layout.segments()) {
    if (seg.name == kSegGnnEmbedding || seg.name == kSegFeatures) {
      const Matrix& src = seg.name == kSegGnnEmbedding ? *in.gnn_embedding : *in.features;
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = src.row(i);
        std::copy(r.begin(), r.end(), out.values.row(i).begin() + static_cast<std::ptrdiff_t>(seg.offset));
      }
      continue;
    }
    const auto it = stats.find(seg.name);
    if (it == stats.end()) throw ConfigError("assemble_features: no stats for " + seg.name);
    const auto src = seg.name == kSegUncertainty   ? in.uncertainty
                     : seg.name == kSegSoftHomophily ? in.soft_homophily
                                                     : in.degree;
    for (std::size_t i = 0; i < n; ++i) {
      out.values(i, seg.offset) = (src[i] - it->second.mean) / it->second.std;
    }
  }
  return out;
}

double RouterPolicy::logit(std::span<const double> f) const {
  if (f.size() != w.size()) {
    throw ConfigError("router: feature dim " + std::to_string(f.size()) + " != weight dim " +
                      std::to_string(w.size()));
  }
  return std::inner_product(f.begin(), f.end(), w.begin(), bias);
}

json RouterPolicy::to_json(const FeatureLayout& layout) const {
  return json{{"schema", kCheckpointSchema}, {"layout", layout.to_json()}, {"w", w}, {"b", bias}};
}

RouterPolicy RouterPolicy::from_json(const json& j, FeatureLayout* layout) {
  if (j.value("schema", 0) != kCheckpointSchema) throw ConfigError("unsupported policy schema");
  RouterPolicy p{j.at("w").get<std::vector<double>>(), j.at("b").get<double>()};
  const auto parsed = FeatureLayout::from_json(j.at("layout"));
  if (parsed.total_dim() != p.w.size()) throw ConfigError("policy layout does not match weights");
  if (layout) *layout = parsed;
  return p;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double route_score(const RouterPolicy& policy, std::span<const double> f) {
  return sigmoid(policy.logit(f));
}

std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k,
                                     std::span<const NodeId> ids) {
  if (!ids.empty() && ids.size() != scores.size()) throw ConfigError("select_topk: ids/scores size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto id_of = [&](std::size_t i) { return ids.empty() ? i : ids[i]; };
  k = std::min(k, scores.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return id_of(a) < id_of(b);
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

void BudgetSchedule::validate(int batch_size) const {
  if (!(k_end >= 1 && k_end <= k_start && k_start <= batch_size)) {
    throw ConfigError("budget schedule needs 1 <= K_end <= K_start <= batch size");
  }
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("budget decay must be in (0, 1)");
}

int schedule_k(const BudgetSchedule& s, int epoch) {
  if (epoch < 1) throw ConfigError("schedule_k: epoch must be >= 1");
  const double k = s.k_end + (s.k_start - s.k_end) * std::pow(s.decay, epoch - 1);
  return static_cast<int>(std::lround(k));
}

RouterLossGrad router_loss_grad(const RouterPolicy& policy, std::span<const double> f,
                                double reward, double lambda_entropy, bool routed,
                                RouterLossMode mode) {
  RouterLossGrad out;
  const double a = std::clamp(sigmoid(policy.logit(f)), kScoreClamp, 1.0 - kScoreClamp);
  out.score = a;
  const double ent = -a * std::log(a) - (1.0 - a) * std::log(1.0 - a);
  if (!routed && mode == RouterLossMode::action_likelihood) {
    out.loss = -reward * std::log(1.0 - a);
    out.grad_logit = reward * a;
  } else {
    out.loss = -reward * std::log(a);
    out.grad_logit = -reward * (1.0 - a);
  }
  out.loss -= lambda_entropy * ent;
  out.grad_logit += lambda_entropy * a * (1.0 - a) * std::log(a / (1.0 - a));
  out.grad_w.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out.grad_w[i] = out.grad_logit * f[i];
  out.grad_bias = out.grad_logit;
  return out;
}

}  // namespace glance
