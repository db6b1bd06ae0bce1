#include "glance/gcn.hpp"

#include <cmath>
#include <string>

#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"
#include "glance/loss.hpp"

namespace glance {

using nlohmann::json;

NormalizedAdjacency normalize_adjacency(const TextAttributedGraph& g) {
  NormalizedAdjacency adj;
  adj.n = g.num_nodes();
  std::vector<double> inv_sqrt(adj.n);
  for (NodeId v = 0; v < adj.n; ++v) {
    inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degree(v)) + 1.0);
  }
  adj.row_offsets.assign(adj.n + 1, 0);
  for (NodeId v = 0; v < adj.n; ++v) {
    bool self_done = false;
    auto push = [&](NodeId u) {
      adj.cols.push_back(u);
      adj.vals.push_back(inv_sqrt[v] * inv_sqrt[u]);
    };
    for (NodeId u : g.neighbors(v)) {
      if (!self_done && u > v) {
        push(v);
        self_done = true;
      }
      push(u);
    }
    if (!self_done) push(v);
    adj.row_offsets[v + 1] = adj.cols.size();
  }
  return adj;
}

Matrix NormalizedAdjacency::multiply(const Matrix& x) const {
  if (x.rows() != n) throw ConfigError("adjacency multiply: row mismatch");
  Matrix out(n, x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) {
      const double a = vals[p];
      const auto xr = x.row(cols[p]);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += a * xr[j];
    }
  }
  return out;
}

Matrix NormalizedAdjacency::to_dense() const {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) out(i, cols[p]) = vals[p];
  }
  return out;
}

GcnModel GcnModel::create(std::size_t feature_dim, std::size_t hidden, int num_layers,
                          int num_classes, Rng& rng) {
  if (num_layers < 1) throw ConfigError("GCN needs at least one layer");
  GcnModel m;
  std::size_t in = feature_dim;
  for (int l = 0; l < num_layers; ++l) {
    Matrix w(in, hidden);
    const double scale = std::sqrt(2.0 / static_cast<double>(in + hidden));
    for (double& x : w.values()) x = scale * rng.normal();
    m.weights.push_back(std::move(w));
    in = hidden;
  }
  const std::size_t dims[] = {hidden, static_cast<std::size_t>(num_classes)};
  m.head = MlpModel::create(dims, rng);
  return m;
}

ParamViews GcnModel::parameters() {
  ParamViews out;
  for (auto& w : weights) out.push_back(w.values());
  for (auto v : head.parameters()) out.push_back(v);
  return out;
}

ParamViews GcnGradients::views() {
  ParamViews out;
  for (auto& w : weights) out.push_back(w.values());
  for (auto v : head.views()) out.push_back(v);
  return out;
}

GcnForward gcn_forward(const GcnModel& model, const NormalizedAdjacency& adj, const Matrix& x,
                       double dropout_rate, Rng* rng) {
  if (x.cols() != model.weights.front().rows()) {
    throw ConfigError("gcn_forward: feature dim " + std::to_string(x.cols()) + " != " +
                      std::to_string(model.weights.front().rows()));
  }
  const bool drop = rng != nullptr && dropout_rate > 0.0;
  GcnForward out;
  auto& c = out.cache;
  c.masks.resize(model.weights.size());
  Matrix h = x;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (l > 0 && drop) {
      auto d = dropout_apply(h, dropout_rate, *rng);
      h = std::move(d.output);
      c.masks[l] = std::move(d.mask);
    }
    Matrix agg = adj.multiply(h);
    Matrix pre = matmul(agg, model.weights[l]);
    c.aggregated.push_back(std::move(agg));
    h = pre;
    if (l + 1 < model.weights.size()) {
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
    }
    c.pre.push_back(std::move(pre));
  }
  require_finite(h, "gcn_forward");
  out.z = h;
  Matrix head_in = h;
  if (drop) {
    auto d = dropout_apply(h, dropout_rate, *rng);
    head_in = std::move(d.output);
    c.head_mask = std::move(d.mask);
  }
  auto head = mlp_forward(model.head, head_in);
  out.logits = std::move(head.output);
  c.head = std::move(head.cache);
  return out;
}

GcnGradients gcn_backward(const GcnModel& model, const NormalizedAdjacency& adj,
                          const GcnCache& cache, const Matrix& grad_logits, const Matrix* grad_z) {
  GcnGradients out;
  auto head_back = mlp_backward(model.head, cache.head, grad_logits);
  out.head = std::move(head_back.grads);
  Matrix g = std::move(head_back.grad_input);
  if (!cache.head_mask.empty()) g = hadamard(g, cache.head_mask);
  if (grad_z) {
    auto gv = g.values();
    const auto zv = grad_z->values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += zv[i];
  }
  const std::size_t L = model.weights.size();
  out.weights.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L) {
      auto gv = g.values();
      const auto pv = cache.pre[l].values();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (pv[i] <= 0.0) gv[i] = 0.0;
      }
    }
    out.weights[l] = matmul_tn(cache.aggregated[l], g);
    if (l == 0) break;
    // Â is symmetric, so Âᵀ · grad = Â · grad.
    g = adj.multiply(matmul_nt(g, model.weights[l]));
    if (!cache.masks[l].empty()) g = hadamard(g, cache.masks[l]);
  }
  return out;
}

Matrix feature_matrix(const TextAttributedGraph& g) {
  Matrix x(g.num_nodes(), g.feature_dim());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto f = g.feature(v);
    std::copy(f.begin(), f.end(), x.row(v).begin());
  }
  return x;
}

GnnTrainResult gnn_train(const TextAttributedGraph& g, const GnnConfig& config) {
  config.train.validate();
  if (config.num_layers < 1) throw ConfigError("gnn: num_layers must be >= 1");
  const auto train = g.nodes_in(Split::train);
  const auto val = g.nodes_in(Split::val);
  if (train.empty() || val.empty()) throw ConfigError("gnn_train needs nonempty train and val splits");
  Rng rng(config.train.seed);
  Rng init_rng = rng.split(1);
  Rng drop_rng = rng.split(2);
  GnnTrainResult result;
  GcnModel current = GcnModel::create(g.feature_dim(), config.hidden, config.num_layers,
                                      g.num_classes(), init_rng);
  result.model = current;
  const auto adj = normalize_adjacency(g);
  const Matrix x = feature_matrix(g);
  AdamW opt({config.train.learning_rate, 0.9, 0.999, 1e-8, config.train.weight_decay});
  result.best_val_accuracy = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
    BatchCrossEntropy ce;
    Matrix logits;
    try {
      auto fwd = gcn_forward(current, adj, x, config.train.dropout_rate, &drop_rng);
      ce = mean_cross_entropy(fwd.logits, train, g.labels());
      auto grads = gcn_backward(current, adj, fwd.cache, ce.grad);
      auto views = grads.views();
      clip_gradients(views, config.train.clip_norm);
      opt.step(current.parameters(), const_views(views));
      logits = gcn_forward(current, adj, x).logits;
    } catch (const DivergenceError& e) {
      throw DivergenceError("gnn training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochLog log{epoch, ce.mean_loss, accuracy(logits, g.labels(), train),
                 accuracy(logits, g.labels(), val)};
    result.history.push_back(log);
    if (log.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = log.val_accuracy;
      result.best_epoch = epoch;
      result.model = current;
      since_best = 0;
    } else if (++since_best >= config.train.patience) {
      break;
    }
  }
  return result;
}

Matrix head_predict(const GcnModel& model, const Matrix& z) {
  return softmax_rows(mlp_forward(model.head, z).output);
}

std::vector<double> mc_dropout_uncertainty(const GcnModel& model, const NormalizedAdjacency& adj,
                                           const Matrix& x, int passes, double rate,
                                           std::uint64_t seed, UncertaintyKind kind) {
  if (passes < 2) throw ConfigError("mc dropout needs at least two passes");
  const std::size_t n = x.rows();
  const std::size_t C = model.head.output_dim();
  Matrix mean(n, C);
  std::vector<std::vector<std::size_t>> votes(n, std::vector<std::size_t>(C, 0));
  const Rng root(seed);
  for (int p = 0; p < passes; ++p) {
    Rng stream = root.split(static_cast<std::uint64_t>(p));
    const Matrix probs = softmax_rows(gcn_forward(model, adj, x, rate, &stream).logits);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = probs.row(i);
      auto m = mean.row(i);
      for (std::size_t k = 0; k < C; ++k) m[k] += row[k] / passes;
      ++votes[i][argmax(row)];
    }
  }
  std::vector<double> out(n);
  const double log_c = std::log(static_cast<double>(C));
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == UncertaintyKind::entropy) {
      out[i] = C > 1 ? std::clamp(entropy(mean.row(i)) / log_c, 0.0, 1.0) : 0.0;
    } else {
      std::size_t modal = 0;
      for (std::size_t k = 0; k < C; ++k) modal = std::max(modal, votes[i][k]);
      out[i] = 1.0 - static_cast<double>(modal) / passes;
    }
  }
  return out;
}

json gcn_to_json(const GcnModel& model) {
  json layers = json::array();
  for (const auto& w : model.weights) {
    DenseLayer layer{w, {}, Activation::relu};
    layers.push_back(layer_to_json(layer));
  }
  layers.back()["act"] = "id";
  for (const auto& l : model.head.layers()) layers.push_back(layer_to_json(l));
  return json{{"schema", kCheckpointSchema},
              {"kind", "gcn"},
              {"num_layers", model.num_layers()},
              {"hidden", model.hidden_dim()},
              {"layers", std::move(layers)}};
}

GcnModel gcn_from_json(const json& j) {
  if (j.value("schema", 0) != kCheckpointSchema || j.value("kind", std::string()) != "gcn") {
    throw ConfigError("not a gcn checkpoint");
  }
  const auto L = j.at("num_layers").get<std::size_t>();
  const auto& layers = j.at("layers");
  if (layers.size() <= L) throw ConfigError("gcn checkpoint: missing head layer");
  GcnModel m;
  for (std::size_t l = 0; l < L; ++l) m.weights.push_back(layer_from_json(layers[l]).weight);
  std::vector<DenseLayer> head;
  for (std::size_t l = L; l < layers.size(); ++l) head.push_back(layer_from_json(layers[l]));
  m.head = MlpModel(std::move(head));
  for (std::size_t l = 1; l < L; ++l) {
    if (m.weights[l - 1].cols() != m.weights[l].rows()) throw ConfigError("gcn checkpoint: dims do not chain");
  }
  if (m.head.input_dim() != m.hidden_dim()) throw ConfigError("gcn checkpoint: head dim mismatch");
  return m;
}

}  // namespace glance
