#include "glance/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "glance/checkpoint.hpp"
#include "glance/dataset_io.hpp"
#include "glance/errors.hpp"
#include "glance/loss.hpp"
#include "glance/metrics.hpp"
#include "glance/prompts.hpp"

namespace glance {

using nlohmann::json;
namespace fs = std::filesystem;

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

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw MissingArtifactError("missing artifact " + p.string() + " (" + hint + ")");
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::string beta_tag(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "beta_%.3g", beta);
  return buf;
}

}  // namespace

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& cfg, int num_classes) {
  const auto& p = cfg.provider;
  std::unique_ptr<EmbeddingBackend> backend;
  if (p.kind == "mock") {
    backend = std::make_unique<MockEmbedder>(p.dim, p.mock_seed,
                                             ClassVocabulary(num_classes, p.words_per_class));
  } else {
    HttpEmbedderConfig h;
    h.endpoint = p.endpoint;
    h.model = p.model;
    h.dim = p.dim;
    h.max_retries = p.max_retries;
    h.backoff_ms = p.backoff_ms;
    h.timeout_s = p.timeout_s;
    if (const char* key = std::getenv("GLANCE_API_KEY")) h.api_key = key;
    backend = std::make_unique<HttpEmbedder>(std::move(h));
  }
  std::shared_ptr<EmbeddingCache> cache;
  if (p.use_cache_file) {
    cache = std::make_shared<EmbeddingCache>(p.cache ? *p.cache : RunPaths{cfg.out}.cache());
    for (const auto& w : cache->warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());
  } else {
    cache = std::make_shared<EmbeddingCache>();
  }
  return std::make_unique<EmbeddingProvider>(std::move(backend), std::move(cache), p.request_batch);
}

EvalReport evaluate_trace(const TextAttributedGraph& g, const GlanceModel& model,
                          const RoutingTrace& trace, int k_test, std::span<const double> bin_edges) {
  EvalInputs in;
  in.nodes = trace.nodes;
  in.final_predictions = trace.predictions;
  in.routed = trace.routed;
  in.k_test = k_test;
  for (NodeId v : trace.nodes) {
    in.gnn_predictions.push_back(static_cast<int>(argmax(model.signals().p_gnn.row(v))));
  }
  // Each routed node costs three prompts (ego, hop-1, hop-2).
  in.provider_calls = 3 * trace.routed_count;
  return build_eval_report(g, in, bin_edges);
}

Pipeline::Pipeline(RunConfig config) : cfg_(std::move(config)), paths_{cfg_.out} {}

void Pipeline::write_resolved_config() const {
  write_json_file(paths_.resolved_config(), run_config_to_json(cfg_));
}

void Pipeline::record(const std::string& command, const json& timings,
                      const std::vector<fs::path>& artifacts) {
  write_resolved_config();
  json manifest = json::object();
  if (fs::exists(paths_.manifest())) manifest = read_json_file(paths_.manifest());
  manifest["version"] = kVersion;
  manifest["prompt_template"] = kPromptTemplateVersion;
  manifest["checkpoint_schema"] = kCheckpointSchema;
  manifest["config_sha256"] = file_sha256(paths_.resolved_config());
  for (const auto& a : artifacts) {
    if (fs::exists(a)) manifest["artifacts"][fs::relative(a, paths_.root).generic_string()] = file_sha256(a);
  }
  manifest["timings"][command] = timings;
  write_json_file(paths_.manifest(), manifest);
}

TextAttributedGraph Pipeline::load_graph(EmbeddingProvider* provider) const {
  const fs::path nodes = cfg_.data.nodes.empty() ? paths_.nodes() : cfg_.data.nodes;
  const fs::path edges = cfg_.data.edges.empty() ? paths_.edges() : cfg_.data.edges;
  require_file(nodes, "run `glance gen` or set data.nodes");
  require_file(edges, "run `glance gen` or set data.edges");
  IngestOptions opts;
  opts.num_classes = cfg_.data.num_classes;
  opts.split_seed = cfg_.data_seed();
  if (cfg_.data.fill_features_from_provider && provider != nullptr) {
    opts.fill_missing_features = [provider](const std::string& text) {
      auto v = provider->embed({text}).front();
      l2_normalize(v);
      return v;
    };
  }
  return ingest_dataset(nodes, edges, opts);
}

GcnModel Pipeline::load_gcn() const {
  require_file(paths_.gcn(), "run `glance train-gnn` first");
  return gcn_from_json(read_json_file(paths_.gcn()));
}

HomophilyEstimator Pipeline::load_q() const {
  require_file(paths_.q(), "run `glance train-q` first");
  return estimator_from_json(read_json_file(paths_.q()));
}

SynthResult Pipeline::gen() {
  Stopwatch sw;
  auto r = synth_generate(cfg_.synth);
  fs::create_directories(paths_.nodes().parent_path());
  write_nodes_jsonl(r.graph, paths_.nodes());
  write_edges_csv(r.graph, paths_.edges());
  record("gen", {{"total", sw.seconds()}}, {paths_.nodes(), paths_.edges()});
  return r;
}

GnnTrainResult Pipeline::train_gnn() {
  Stopwatch sw;
  const auto g = load_graph();
  auto r = gnn_train(g, cfg_.gnn);
  json header = gcn_to_json(r.model);
  write_json_file(paths_.gcn(), header);
  record("train-gnn",
         {{"total", sw.seconds()}, {"best_epoch", r.best_epoch}, {"best_val_accuracy", r.best_val_accuracy}},
         {paths_.gcn()});
  return r;
}

HomophilyEstimator Pipeline::train_q() {
  Stopwatch sw;
  const auto g = load_graph();
  auto q = glance::train_q(g, cfg_.q);
  write_json_file(paths_.q(), estimator_to_json(q));
  record("train-q", {{"total", sw.seconds()}, {"val_accuracy", q.val_accuracy}}, {paths_.q()});
  return q;
}

json Pipeline::embed(const EmbedOptionsCli& options) {
  if (options.max_in_flight < 1) throw ConfigError("--max-in-flight must be >= 1");
  Stopwatch sw;
  // Class count is needed for the mock vocabulary before the graph exists.
  auto provider = make_provider(cfg_, cfg_.data.num_classes > 0 ? cfg_.data.num_classes : cfg_.synth.num_classes);
  const auto g = load_graph(provider.get());
  if (g.num_classes() != (cfg_.data.num_classes > 0 ? cfg_.data.num_classes : cfg_.synth.num_classes)) {
    provider = make_provider(cfg_, g.num_classes());
  }
  const auto names = resolve_class_names(cfg_.glance, g.num_classes());
  std::vector<NodeId> nodes;
  for (Split s : options.splits) {
    const auto part = g.nodes_in(s);
    nodes.insert(nodes.end(), part.begin(), part.end());
  }
  std::vector<PromptBundle> bundles;
  bundles.reserve(nodes.size());
  for (NodeId v : nodes) {
    bundles.push_back(serialize_prompts(g, v, names, prompt_seed(cfg_.glance), cfg_.glance.prompts));
  }
  const std::size_t chunk = std::max<std::size_t>(1, cfg_.provider.request_batch / 3);
  const std::size_t chunks = (bundles.size() + chunk - 1) / chunk;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      const std::size_t start = c * chunk;
      const std::size_t end = std::min(bundles.size(), start + chunk);
      try {
        embed_nodes(*provider, std::span<const PromptBundle>(bundles.data() + start, end - start),
                    cfg_.glance.embed);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chunks;
      }
    }
  };
  std::vector<std::thread> threads;
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.max_in_flight), std::max<std::size_t>(1, chunks));
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  last_backend_calls_ = provider->backend_calls();
  json summary{{"nodes", nodes.size()},
               {"backend_prompts", provider->backend_calls()},
               {"cache_hits", provider->cache_hits()},
               {"cache_entries", provider->cache().size()}};
  json timings = summary;
  timings["total"] = sw.seconds();
  record("embed", timings, {});
  return summary;
}

Pipeline::Trained Pipeline::train_and_eval(const TextAttributedGraph& g, const GcnModel& gcn,
                                           const HomophilyEstimator& q, EmbeddingProvider& provider,
                                           const GlanceConfig& gc, const fs::path& bundle_dir) {
  GlanceModel model(g, gcn, q, provider, gc);
  Trained t;
  t.report = model.train();
  save_bundle(bundle_dir, model, t.report);
  const auto test = g.nodes_in(Split::test);
  const auto trace = model.predict(test, gc.k_test);
  t.eval = evaluate_trace(g, model, trace, gc.k_test, cfg_.eval.bin_edges);
  return t;
}

TrainReport Pipeline::train_glance() {
  Stopwatch sw;
  const auto gcn = load_gcn();
  const auto q = load_q();
  auto provider = make_provider(cfg_, gcn.head.output_dim() > 0 ? static_cast<int>(gcn.head.output_dim()) : 1);
  const auto g = load_graph(provider.get());
  GlanceModel model(g, gcn, q, *provider, cfg_.glance);
  auto report = model.train();
  json extra{{"version", kVersion},
             {"prompt_template", kPromptTemplateVersion},
             {"provider", provider->backend().fingerprint()},
             {"provider_dim", provider->dim()}};
  save_bundle(paths_.bundle(), model, report, extra);
  last_backend_calls_ = provider->backend_calls();
  record("train-glance",
         {{"total", sw.seconds()},
          {"experts", report.seconds_experts},
          {"provider", report.seconds_provider},
          {"router_refiner", report.seconds_router_refiner},
          {"backend_prompts", provider->backend_calls()},
          {"cache_hits", provider->cache_hits()}},
         {paths_.bundle() / "router.json", paths_.bundle() / "refiner.json",
          paths_.bundle() / "manifest.json", paths_.bundle() / "train_report.json"});
  return report;
}

EvalOutcome Pipeline::eval(const EvalOptions& options) {
  Stopwatch sw;
  const auto gcn = load_gcn();
  const auto q = load_q();
  require_file(paths_.bundle() / "manifest.json", "run `glance train-glance` first");
  auto provider = make_provider(cfg_, static_cast<int>(gcn.head.output_dim()));
  const auto g = load_graph(provider.get());
  GlanceModel model(g, gcn, q, *provider, cfg_.glance);
  load_bundle(paths_.bundle(), model);
  const int k = options.k_test.value_or(cfg_.glance.k_test);
  const std::vector<double> edges = options.bin_edges.value_or(cfg_.eval.bin_edges);
  const auto test = g.nodes_in(Split::test);
  const auto trace = model.predict(test, k);
  EvalOutcome out;
  out.report = evaluate_trace(g, model, trace, k, edges);
  json j = out.report.to_json();
  std::string text = out.report.to_text();
  if (options.oracle_h) {
    std::vector<double> oracle_scores;
    for (NodeId v : test) oracle_scores.push_back(1.0 - local_homophily(g, v));
    const auto otrace = model.predict_with_scores(test, k, oracle_scores);
    out.oracle_report = evaluate_trace(g, model, otrace, k, edges);
    j["oracle_h_routing"] = out.oracle_report->to_json();
    text += "\nrouting by lowest true homophily (oracle):\n" + out.oracle_report->to_text();
  }
  out.path = paths_.eval_dir() / ("report_k" + std::to_string(k) + ".json");
  write_json_file(out.path, j);
  write_text(paths_.eval_dir() / ("report_k" + std::to_string(k) + ".txt"), text);
  last_backend_calls_ = provider->backend_calls();
  record("eval-k" + std::to_string(k),
         {{"total", sw.seconds()}, {"backend_prompts", provider->backend_calls()}}, {out.path});
  return out;
}

HeuristicGrid Pipeline::heuristics(bool oracle_h) {
  Stopwatch sw;
  const auto gcn = load_gcn();
  const auto q = load_q();
  auto provider = make_provider(cfg_, static_cast<int>(gcn.head.output_dim()));
  const auto g = load_graph(provider.get());
  const auto signals = compute_expert_signals(g, gcn, q, cfg_.glance.uncertainty,
                                              uncertainty_seed(cfg_.glance));
  NodeEmbeddingStore store(g, *provider, resolve_class_names(cfg_.glance, g.num_classes()),
                           prompt_seed(cfg_.glance), cfg_.glance.prompts, cfg_.glance.embed);
  const auto predictor = train_llm_predictor(g, store, mix_seed(cfg_.seed, 70));
  const auto test = g.nodes_in(Split::test);
  const auto llm = llm_predict(predictor, store, test);
  std::vector<bool> gnn_ok(g.num_nodes(), false), llm_ok(g.num_nodes(), false);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const NodeId v = test[i];
    gnn_ok[v] = static_cast<int>(argmax(signals.p_gnn.row(v))) == g.label(v);
    llm_ok[v] = llm[i] == g.label(v);
  }
  std::vector<std::string> warnings;
  const auto metrics = heuristic_metrics(g, &signals, true, oracle_h, mix_seed(cfg_.seed, 71), &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  auto grid = heuristic_grid(metrics, test, gnn_ok, llm_ok, cfg_.eval.heuristic_fractions,
                             mix_seed(cfg_.seed, 72));
  json j = grid.to_json();
  j["oracle_h"] = oracle_h;
  j["llm_predictor_val_accuracy"] = predictor.val_accuracy;
  const fs::path path = paths_.root / "heuristics" / "grid.json";
  write_json_file(path, j);
  write_text(paths_.root / "heuristics" / "grid.txt", grid.to_text());
  last_backend_calls_ = provider->backend_calls();
  record("heuristics", {{"total", sw.seconds()}, {"backend_prompts", provider->backend_calls()}}, {path});
  return grid;
}

json Pipeline::ablate() {
  Stopwatch sw;
  const auto gcn = load_gcn();
  const auto q = load_q();
  auto provider = make_provider(cfg_, static_cast<int>(gcn.head.output_dim()));
  const auto g = load_graph(provider.get());
  GlanceConfig base = cfg_.glance;
  base.ablated_features.clear();
  const auto full = train_and_eval(g, gcn, q, *provider, base, paths_.root / "ablate" / "full");
  auto row = [](const std::string& name, const EvalReport& r, double ref) {
    json bins = json::array();
    for (const auto& b : r.bins) bins.push_back(b.accuracy ? json(*b.accuracy) : json(nullptr));
    return json{{"removed", name}, {"accuracy", r.accuracy}, {"delta", r.accuracy - ref}, {"bins", bins}};
  };
  json rows = json::array();
  rows.push_back(row("none", full.eval, full.eval.accuracy));
  std::string text = "removed           accuracy   delta\n";
  auto line = [&text](const std::string& name, double acc, double delta) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-16s %9.2f %7.2f\n", name.c_str(), 100.0 * acc, 100.0 * delta);
    text += buf;
  };
  line("none", full.eval.accuracy, 0.0);
  for (const auto& seg : routing_segment_names()) {
    GlanceConfig gc = base;
    gc.ablated_features = {seg};
    const auto t = train_and_eval(g, gcn, q, *provider, gc, paths_.root / "ablate" / seg);
    rows.push_back(row(seg, t.eval, full.eval.accuracy));
    line(seg, t.eval.accuracy, t.eval.accuracy - full.eval.accuracy);
  }
  json out{{"k_test", base.k_test}, {"rows", rows}};
  const fs::path path = paths_.root / "ablate" / "table.json";
  write_json_file(path, out);
  write_text(paths_.root / "ablate" / "table.txt", text);
  last_backend_calls_ = provider->backend_calls();
  record("ablate", {{"total", sw.seconds()}, {"backend_prompts", provider->backend_calls()}}, {path});
  return out;
}

json Pipeline::sweep_gnn() {
  Stopwatch sw;
  const auto g = load_graph();
  json rows = json::array();
  double best = -1.0;
  json best_row;
  for (double lr : cfg_.sweep.learning_rates) {
    for (double wd : cfg_.sweep.weight_decays) {
      GnnConfig c = cfg_.gnn;
      c.train.learning_rate = lr;
      c.train.weight_decay = wd;
      const auto r = gnn_train(g, c);
      json row{{"lr", lr}, {"weight_decay", wd}, {"best_val_accuracy", r.best_val_accuracy},
               {"best_epoch", r.best_epoch}};
      if (r.best_val_accuracy > best) {
        best = r.best_val_accuracy;
        best_row = row;
      }
      rows.push_back(std::move(row));
    }
  }
  json out{{"rows", rows}, {"best", best_row}};
  const fs::path path = paths_.root / "sweep" / "gnn.json";
  write_json_file(path, out);
  record("sweep-gnn", {{"total", sw.seconds()}}, {path});
  return out;
}

json Pipeline::sweep_beta() {
  Stopwatch sw;
  const auto gcn = load_gcn();
  const auto q = load_q();
  auto provider = make_provider(cfg_, static_cast<int>(gcn.head.output_dim()));
  const auto g = load_graph(provider.get());
  json rows = json::array();
  for (double beta : cfg_.sweep.betas) {
    GlanceConfig gc = cfg_.glance;
    gc.beta = beta;
    const auto t = train_and_eval(g, gcn, q, *provider, gc, paths_.root / "sweep" / beta_tag(beta));
    json bins = json::array();
    for (const auto& b : t.eval.bins) bins.push_back(b.accuracy ? json(*b.accuracy) : json(nullptr));
    rows.push_back({{"beta", beta},
                    {"accuracy", t.eval.accuracy},
                    {"bins", bins},
                    {"best_val_accuracy", t.report.best_val_accuracy}});
  }
  json out{{"rows", rows}};
  const fs::path path = paths_.root / "sweep" / "beta.json";
  write_json_file(path, out);
  last_backend_calls_ = provider->backend_calls();
  record("sweep-beta", {{"total", sw.seconds()}, {"backend_prompts", provider->backend_calls()}}, {path});
  return out;
}

}  // namespace glance
