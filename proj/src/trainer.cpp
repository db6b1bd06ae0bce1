#include "glance/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"
#include "glance/loss.hpp"

namespace glance {

using nlohmann::json;

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

double cross_entropy_of_probs(std::span<const double> p, int label) {
  return -std::log(p[static_cast<std::size_t>(label)]);
}

}  // namespace

std::vector<std::string> resolve_class_names(const GlanceConfig& c, int num_classes) {
  if (c.class_names.empty()) return default_class_names(num_classes);
  if (c.class_names.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("class_names has " + std::to_string(c.class_names.size()) + " entries, graph has " +
                      std::to_string(num_classes) + " classes");
  }
  return c.class_names;
}

std::uint64_t prompt_seed(const GlanceConfig& c) { return mix_seed(c.seed, 31); }
std::uint64_t uncertainty_seed(const GlanceConfig& c) { return mix_seed(c.seed, 17); }

void GlanceConfig::validate() const {
  if (batch_size < 1) throw ConfigError("glance: batch_size must be >= 1");
  schedule.validate(batch_size);
  if (k_test < 0) throw ConfigError("glance: k_test must be >= 0");
  if (beta < 0.0) throw ConfigError("glance: beta must be >= 0");
  if (lambda_router < 0.0 || lambda_entropy < 0.0) throw ConfigError("glance: lambdas must be >= 0");
  if (max_epochs < 1 || patience < 1) throw ConfigError("glance: max_epochs and patience must be >= 1");
  if (train_cap < 1) throw ConfigError("glance: train_cap must be >= 1");
  if (!(router_lr >= 0.0 && refiner_lr >= 0.0)) throw ConfigError("glance: learning rates must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("glance: clip_norm must be positive");
  if (uncertainty.passes < 2) throw ConfigError("glance: uncertainty passes must be >= 2");
  const auto& known = routing_segment_names();
  for (const auto& a : ablated_features) {
    if (std::find(known.begin(), known.end(), a) == known.end()) {
      throw ConfigError("glance: unknown feature segment '" + a + "'");
    }
  }
}

json GlanceConfig::to_json() const {
  return json{{"beta", beta},
              {"lambda_router", lambda_router},
              {"lambda_entropy", lambda_entropy},
              {"k_start", schedule.k_start},
              {"k_end", schedule.k_end},
              {"decay", schedule.decay},
              {"batch_size", batch_size},
              {"k_test", k_test},
              {"train_cap", train_cap},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"router_lr", router_lr},
              {"refiner_lr", refiner_lr},
              {"weight_decay", weight_decay},
              {"clip_norm", clip_norm},
              {"refiner_hidden", refiner_hidden},
              {"refiner_dropout", refiner_dropout},
              {"router_loss", router_loss == RouterLossMode::as_written ? "as_written" : "action_likelihood"},
              {"ablated_features", ablated_features},
              {"uncertainty_passes", uncertainty.passes},
              {"uncertainty_rate", uncertainty.rate},
              {"uncertainty_kind", uncertainty.kind == UncertaintyKind::entropy ? "entropy" : "disagreement"},
              {"zero_empty_segments", embed.zero_empty_segments},
              {"seed", seed}};
}

ExpertSignals compute_expert_signals(const TextAttributedGraph& g, const GcnModel& gcn,
                                     const HomophilyEstimator& q, const UncertaintyConfig& u,
                                     std::uint64_t seed) {
  ExpertSignals s;
  const auto adj = normalize_adjacency(g);
  s.features = feature_matrix(g);
  const auto fwd = gcn_forward(gcn, adj, s.features);
  s.z_gnn = fwd.z;
  s.p_gnn = softmax_rows(fwd.logits);
  s.uncertainty = mc_dropout_uncertainty(gcn, adj, s.features, u.passes, u.rate, seed, u.kind);
  s.soft_homophily = soft_homophily(g, q_probabilities(q, g));
  s.degree.resize(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) s.degree[v] = static_cast<double>(g.degree(v));
  return s;
}

NodeEmbeddingStore::NodeEmbeddingStore(const TextAttributedGraph& g, EmbeddingProvider& provider,
                                       std::vector<std::string> class_names,
                                       std::uint64_t prompt_seed, PromptLimits limits,
                                       EmbedOptions options)
    : g_(g),
      provider_(provider),
      class_names_(std::move(class_names)),
      prompt_seed_(prompt_seed),
      limits_(limits),
      options_(options) {}

void NodeEmbeddingStore::ensure(std::span<const NodeId> nodes) {
  std::vector<NodeId> missing;
  for (NodeId v : nodes) {
    if (!memo_.contains(v) && std::find(missing.begin(), missing.end(), v) == missing.end()) {
      missing.push_back(v);
    }
  }
  if (missing.empty()) return;
  Stopwatch sw;
  std::vector<PromptBundle> bundles;
  bundles.reserve(missing.size());
  for (NodeId v : missing) bundles.push_back(serialize_prompts(g_, v, class_names_, prompt_seed_, limits_));
  auto vecs = embed_nodes(provider_, bundles, options_);
  for (std::size_t i = 0; i < missing.size(); ++i) memo_.emplace(missing[i], std::move(vecs[i]));
  seconds_ += sw.seconds();
}

const std::vector<double>& NodeEmbeddingStore::get(NodeId v) const {
  const auto it = memo_.find(v);
  if (it == memo_.end()) throw Error("embedding for node " + std::to_string(v) + " was not requested");
  return it->second;
}

Matrix NodeEmbeddingStore::rows(std::span<const NodeId> nodes) {
  ensure(nodes);
  Matrix out(nodes.size(), dim());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& z = get(nodes[i]);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

double reward(bool routed, double loss_gnn, double loss_llm, double beta) {
  if (beta < 0.0) throw ConfigError("reward: beta must be >= 0");
  return routed ? loss_gnn - loss_llm - beta : -loss_gnn;
}

json TrainReport::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch},
                  {"k", e.k},
                  {"routed_per_batch", e.routed_per_batch},
                  {"batch_sizes", e.batch_sizes},
                  {"mean_reward_routed", e.mean_reward_routed},
                  {"mean_reward_unrouted", e.mean_reward_unrouted},
                  {"mean_objective", e.mean_objective},
                  {"val_accuracy", e.val_accuracy}});
  }
  return json{{"epochs", std::move(ep)},
              {"best_epoch", best_epoch},
              {"best_val_accuracy", best_val_accuracy},
              {"train_nodes", train_nodes},
              {"provider_calls_train", provider_calls_train},
              {"provider_calls_val", provider_calls_val},
              {"seconds",
               {{"experts", seconds_experts},
                {"provider", seconds_provider},
                {"router_refiner", seconds_router_refiner}}}};
}

std::string gcn_hash(const GcnModel& m) { return sha256_hex(canonical_dump(gcn_to_json(m))); }
std::string estimator_hash(const HomophilyEstimator& q) {
  return sha256_hex(canonical_dump(estimator_to_json(q)));
}

GlanceModel::GlanceModel(const TextAttributedGraph& g, const GcnModel& gcn,
                         const HomophilyEstimator& q, EmbeddingProvider& provider,
                         GlanceConfig config)
    : g_(g),
      gcn_(gcn),
      q_(q),
      config_((config.validate(), std::move(config))),
      store_(g, provider, resolve_class_names(config_, g.num_classes()), prompt_seed(config_),
             config_.prompts, config_.embed),
      router_opt_({config_.router_lr, 0.9, 0.999, 1e-8, config_.weight_decay}),
      refiner_opt_({config_.refiner_lr, 0.9, 0.999, 1e-8, config_.weight_decay}),
      refiner_rng_(Rng(config_.seed).split(43)) {
  if (gcn.head.output_dim() != static_cast<std::size_t>(g.num_classes()) ||
      q.q.output_dim() != static_cast<std::size_t>(g.num_classes())) {
    throw ConfigError("expert output dims do not match the graph's classes");
  }
  gcn_hash_ = glance::gcn_hash(gcn);
  q_hash_ = glance::estimator_hash(q);
  Stopwatch sw;
  signals_ = compute_expert_signals(g, gcn, q, config_.uncertainty, uncertainty_seed(config_));
  const RouterInputs in{&signals_.z_gnn, signals_.uncertainty, signals_.soft_homophily,
                        &signals_.features, signals_.degree};
  const auto train = g.nodes_in(Split::train);
  if (train.empty()) throw ConfigError("glance needs a nonempty train split");
  stats_ = scalar_stats(in, train);
  features_ = assemble_features(in, stats_, config_.ablated_features);
  seconds_experts_ = sw.seconds();
  policy_ = RouterPolicy{std::vector<double>(features_.layout.total_dim(), 0.0), 0.0};
  Rng init = Rng(config_.seed).split(41);
  refiner_ = RefinerModel::create(signals_.z_gnn.cols(), store_.dim(), config_.refiner_hidden,
                                  g.num_classes(), init);
  refiner_.dropout_rate = config_.refiner_dropout;
}

std::vector<double> GlanceModel::scores(std::span<const NodeId> nodes) const {
  std::vector<double> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) out.push_back(route_score(policy_, features_.values.row(v)));
  return out;
}

BatchResult GlanceModel::batch_step(std::span<const NodeId> batch, int k) {
  if (batch.empty()) throw ConfigError("batch_step: empty batch");
  if (k < 0) throw ConfigError("batch_step: negative budget");
  const auto a = scores(batch);
  const auto picked = select_topk(a, static_cast<std::size_t>(k), batch);
  const std::size_t expected = std::min(static_cast<std::size_t>(k), batch.size());
  if (picked.size() != expected) throw Error("routed set size violates the top-k contract");

  std::vector<bool> routed(batch.size(), false);
  std::vector<NodeId> routed_nodes;
  for (std::size_t pos : picked) {
    routed[pos] = true;
    routed_nodes.push_back(batch[pos]);
  }
  // All embeddings for the routed set arrive before any loss is computed.
  Matrix z_llm;
  if (!routed_nodes.empty()) z_llm = store_.rows(routed_nodes);

  BatchResult out;
  out.routed = routed_nodes.size();
  out.records.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const NodeId v = batch[i];
    out.records[i] = {v, routed[i], cross_entropy_of_probs(signals_.p_gnn.row(v), g_.label(v)),
                      std::nullopt, 0.0, a[i]};
  }

  if (!routed_nodes.empty()) {
    RefinerBatch rb{select_rows(signals_.z_gnn, routed_nodes), std::move(z_llm), {}};
    for (NodeId v : routed_nodes) rb.labels.push_back(g_.label(v));
    const auto step = refiner_step(refiner_, refiner_opt_, rb, config_.clip_norm,
                                   refiner_.dropout_rate > 0.0 ? &refiner_rng_ : nullptr);
    for (std::size_t j = 0; j < picked.size(); ++j) out.records[picked[j]].loss_llm = step.losses[j];
  }

  const std::size_t dim = policy_.w.size();
  std::vector<double> grad_w(dim, 0.0);
  std::vector<double> grad_b(1, 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double pred_sum = 0.0;
  double route_sum = 0.0;
  out.route_losses.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& rec = out.records[i];
    rec.reward = reward(rec.routed, rec.loss_gnn, rec.loss_llm.value_or(0.0), config_.beta);
    const auto rl = router_loss_grad(policy_, features_.values.row(rec.node), rec.reward,
                                     config_.lambda_entropy, rec.routed, config_.router_loss);
    out.route_losses[i] = rl.loss;
    pred_sum += rec.routed ? *rec.loss_llm : rec.loss_gnn;
    route_sum += rl.loss;
    const double scale = config_.lambda_router * inv;
    for (std::size_t d = 0; d < dim; ++d) grad_w[d] += scale * rl.grad_w[d];
    grad_b[0] += scale * rl.grad_bias;
  }
  out.mean_pred_loss = pred_sum * inv;
  out.mean_route_loss = route_sum * inv;
  out.objective = out.mean_pred_loss + config_.lambda_router * out.mean_route_loss;
  if (!std::isfinite(out.objective)) throw DivergenceError("glance objective is not finite");

  ParamViews grads{std::span<double>(grad_w), std::span<double>(grad_b)};
  clip_gradients(grads, config_.clip_norm);
  ParamViews params{std::span<double>(policy_.w), std::span<double>(&policy_.bias, 1)};
  router_opt_.step(params, const_views(grads));
  require_finite(policy_.w, "router weights");
  return out;
}

double GlanceModel::objective_from_records(const BatchResult& r) const {
  double pred = 0.0;
  double route = 0.0;
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    pred += rec.routed ? *rec.loss_llm : rec.loss_gnn;
    const double a = std::clamp(rec.score, kScoreClamp, 1.0 - kScoreClamp);
    const double ent = -a * std::log(a) - (1.0 - a) * std::log(1.0 - a);
    const bool alt = !rec.routed && config_.router_loss == RouterLossMode::action_likelihood;
    route += -rec.reward * std::log(alt ? 1.0 - a : a) - config_.lambda_entropy * ent;
  }
  const double n = static_cast<double>(r.records.size());
  return pred / n + config_.lambda_router * route / n;
}

RoutingTrace GlanceModel::predict(std::span<const NodeId> nodes, int k_test) {
  const auto a = scores(nodes);
  return predict_with_scores(nodes, k_test, a);
}

RoutingTrace GlanceModel::predict_with_scores(std::span<const NodeId> nodes, int k_test,
                                              std::span<const double> node_scores) {
  if (k_test < 0) throw ConfigError("k_test must be >= 0");
  if (node_scores.size() != nodes.size()) throw ConfigError("predict: scores not aligned with nodes");
  RoutingTrace trace;
  trace.nodes.assign(nodes.begin(), nodes.end());
  trace.predictions.resize(nodes.size());
  trace.routed.assign(nodes.size(), false);
  trace.scores.assign(node_scores.begin(), node_scores.end());
  const std::size_t calls_before = store_.provider().backend_calls();
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < nodes.size(); start += bs) {
    const std::size_t end = std::min(nodes.size(), start + bs);
    const auto batch = nodes.subspan(start, end - start);
    trace.batch_sizes.push_back(batch.size());
    const auto picked = select_topk(node_scores.subspan(start, end - start),
                                    static_cast<std::size_t>(k_test), batch);
    std::vector<NodeId> routed_nodes;
    for (std::size_t pos : picked) routed_nodes.push_back(batch[pos]);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      trace.predictions[start + i] = static_cast<int>(argmax(signals_.p_gnn.row(batch[i])));
    }
    if (routed_nodes.empty()) continue;
    const Matrix z_llm = store_.rows(routed_nodes);
    const Matrix p = refine_predict(refiner_, select_rows(signals_.z_gnn, routed_nodes), z_llm);
    for (std::size_t j = 0; j < picked.size(); ++j) {
      trace.routed[start + picked[j]] = true;
      trace.predictions[start + picked[j]] = static_cast<int>(argmax(p.row(j)));
    }
    trace.routed_count += routed_nodes.size();
  }
  trace.provider_calls = store_.provider().backend_calls() - calls_before;
  return trace;
}

TrainReport GlanceModel::train() {
  TrainReport report;
  report.seconds_experts = seconds_experts_;
  std::vector<NodeId> train = g_.nodes_in(Split::train);
  const std::vector<NodeId> val = g_.nodes_in(Split::val);
  if (val.empty()) throw ConfigError("glance training needs a nonempty val split");
  Rng rng = Rng(config_.seed).split(51);
  if (train.size() > config_.train_cap) {
    rng.shuffle(train);
    train.resize(config_.train_cap);
    std::sort(train.begin(), train.end());
  }
  report.train_nodes = train.size();

  RouterPolicy best_policy = policy_;
  RefinerModel best_refiner = refiner_;
  report.best_val_accuracy = -1.0;
  int since_best = 0;
  const double provider_s0 = store_.seconds();
  Stopwatch total;
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (int epoch = 1; epoch <= config_.max_epochs; ++epoch) {
    EpochReport ep;
    ep.epoch = epoch;
    ep.k = schedule_k(config_.schedule, epoch);
    std::vector<NodeId> order = train;
    Rng epoch_rng = rng.split(static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);
    double r_routed = 0.0, r_unrouted = 0.0, obj = 0.0;
    std::size_t n_routed = 0, n_unrouted = 0, n_batches = 0;
    const std::size_t calls0 = store_.provider().backend_calls();
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const NodeId> batch(order.data() + start, end - start);
      BatchResult r;
      try {
        try {
          r = batch_step(batch, ep.k);
        } catch (const ProviderError&) {
          // Nothing is updated before the embedding barrier, so one retry is safe.
          r = batch_step(batch, ep.k);
        }
      } catch (const DivergenceError& e) {
        throw DivergenceError("glance training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (r.routed != std::min<std::size_t>(static_cast<std::size_t>(ep.k), batch.size())) {
        throw Error("routed count violates min(K_t, batch)");
      }
      ep.routed_per_batch.push_back(r.routed);
      ep.batch_sizes.push_back(batch.size());
      for (const auto& rec : r.records) {
        if (rec.routed) {
          r_routed += rec.reward;
          ++n_routed;
        } else {
          r_unrouted += rec.reward;
          ++n_unrouted;
        }
      }
      obj += r.objective;
      ++n_batches;
    }
    report.provider_calls_train += store_.provider().backend_calls() - calls0;
    ep.mean_reward_routed = n_routed ? r_routed / static_cast<double>(n_routed) : 0.0;
    ep.mean_reward_unrouted = n_unrouted ? r_unrouted / static_cast<double>(n_unrouted) : 0.0;
    ep.mean_objective = n_batches ? obj / static_cast<double>(n_batches) : 0.0;

    const auto trace = predict(val, config_.k_test);
    report.provider_calls_val += trace.provider_calls;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < val.size(); ++i) hit += trace.predictions[i] == g_.label(val[i]) ? 1 : 0;
    ep.val_accuracy = static_cast<double>(hit) / static_cast<double>(val.size());
    report.epochs.push_back(ep);

    if (ep.val_accuracy > report.best_val_accuracy) {
      report.best_val_accuracy = ep.val_accuracy;
      report.best_epoch = epoch;
      best_policy = policy_;
      best_refiner = refiner_;
      since_best = 0;
    } else if (++since_best >= config_.patience) {
      break;
    }
  }
  policy_ = std::move(best_policy);
  refiner_ = std::move(best_refiner);
  report.seconds_provider = store_.seconds() - provider_s0;
  report.seconds_router_refiner = total.seconds() - report.seconds_provider;
  verify_frozen();
  return report;
}

void GlanceModel::verify_frozen() const {
  if (glance::gcn_hash(gcn_) != gcn_hash_ || glance::estimator_hash(q_) != q_hash_) {
    throw Error("frozen expert changed during GLANCE training");
  }
}

void save_bundle(const std::filesystem::path& dir, const GlanceModel& model,
                 const TrainReport& report, const json& extra_manifest) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "router.json", model.policy().to_json(model.features().layout));
  write_json_file(dir / "refiner.json", refiner_to_json(model.refiner()));
  write_json_file(dir / "train_report.json", report.to_json());
  json stats = json::object();
  for (const auto& [name, s] : model.feature_stats()) stats[name] = {{"mean", s.mean}, {"std", s.std}};
  json manifest = extra_manifest.is_object() ? extra_manifest : json::object();
  manifest["schema"] = kCheckpointSchema;
  manifest["experts"] = {{"gcn", model.gcn_hash()}, {"q", model.q_hash()}};
  manifest["components"] = {{"router", file_sha256(dir / "router.json")},
                            {"refiner", file_sha256(dir / "refiner.json")}};
  manifest["hyperparams"] = model.config().to_json();
  manifest["feature_stats"] = std::move(stats);
  write_json_file(dir / "manifest.json", manifest);
}

void load_bundle(const std::filesystem::path& dir, GlanceModel& model) {
  const auto manifest = read_json_file(dir / "manifest.json");
  const auto& experts = manifest.at("experts");
  if (experts.at("gcn").get<std::string>() != model.gcn_hash() ||
      experts.at("q").get<std::string>() != model.q_hash()) {
    throw MissingArtifactError("expert checkpoint hash mismatch vs. " + (dir / "manifest.json").string());
  }
  const auto& comps = manifest.at("components");
  if (file_sha256(dir / "router.json") != comps.at("router").get<std::string>() ||
      file_sha256(dir / "refiner.json") != comps.at("refiner").get<std::string>()) {
    throw MissingArtifactError("bundle component hash mismatch in " + dir.string());
  }
  FeatureLayout layout;
  auto policy = RouterPolicy::from_json(read_json_file(dir / "router.json"), &layout);
  if (!(layout == model.features().layout)) {
    throw ConfigError("bundle router layout does not match the configured routing features");
  }
  model.policy() = std::move(policy);
  auto refiner = refiner_from_json(read_json_file(dir / "refiner.json"));
  if (refiner.input_dim() != model.refiner().input_dim()) {
    throw ConfigError("bundle refiner input dim does not match provider dim");
  }
  model.refiner() = std::move(refiner);
}

}  // namespace glance
