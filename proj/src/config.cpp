#include "glance/config.hpp"

#include <fstream>
#include <set>

#include "glance/errors.hpp"
#include "glance/rng.hpp"

namespace glance {

using nlohmann::json;

namespace {

// Reads an object's fields and rejects any key that was never asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }
  ~Reader() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(label(key) + ": " + e.what());
    }
  }

  std::optional<Reader> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Reader(j_.at(key), label(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key '" + label(k) + "'");
    }
  }

  std::string label(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Reader& r, TrainConfig& t) {
  r.get("lr", t.learning_rate);
  r.get("weight_decay", t.weight_decay);
  r.get("max_epochs", t.max_epochs);
  r.get("patience", t.patience);
  r.get("dropout", t.dropout_rate);
  r.get("clip_norm", t.clip_norm);
  r.get("batch_size", t.batch_size);
}

json train_json(const TrainConfig& t) {
  return json{{"lr", t.learning_rate},       {"weight_decay", t.weight_decay},
              {"max_epochs", t.max_epochs},  {"patience", t.patience},
              {"dropout", t.dropout_rate},   {"clip_norm", t.clip_norm},
              {"batch_size", t.batch_size}};
}

std::string path_str(const std::filesystem::path& p) { return p.string(); }

}  // namespace

std::uint64_t RunConfig::data_seed() const { return mix_seed(seed, 1); }
std::uint64_t RunConfig::gnn_seed() const { return mix_seed(seed, 2); }
std::uint64_t RunConfig::q_seed() const { return mix_seed(seed, 3); }
std::uint64_t RunConfig::router_seed() const { return mix_seed(seed, 4); }

void RunConfig::validate() const {
  if (data.nodes.empty() != data.edges.empty()) {
    throw ConfigError("data.nodes and data.edges must be given together");
  }
  synth.validate();
  gnn.train.validate();
  q.train.validate();
  if (gnn.num_layers < 1) throw ConfigError("gnn.num_layers must be >= 1");
  if (gnn.hidden == 0 || q.hidden == 0) throw ConfigError("hidden dims must be >= 1");
  if (provider.kind != "mock" && provider.kind != "http") {
    throw ConfigError("provider.kind must be 'mock' or 'http'");
  }
  if (provider.dim == 0) throw ConfigError("provider.dim must be >= 1");
  if (provider.kind == "http" && provider.endpoint.empty()) {
    throw ConfigError("provider.endpoint is required for the http provider");
  }
  if (provider.request_batch == 0) throw ConfigError("provider.request_batch must be >= 1");
  glance.validate();
  if (eval.bin_edges.size() < 2) throw ConfigError("eval.bin_edges needs at least two values");
  for (std::size_t i = 1; i < eval.bin_edges.size(); ++i) {
    if (!(eval.bin_edges[i] > eval.bin_edges[i - 1])) throw ConfigError("eval.bin_edges must increase");
  }
  if (eval.bin_edges.front() != 0.0 || eval.bin_edges.back() != 1.0) {
    throw ConfigError("eval.bin_edges must span [0, 1]");
  }
  for (double f : eval.heuristic_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("eval.heuristic_fractions must lie in (0, 1]");
  }
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  std::string out = c.out.string();
  root.get("out", out);
  c.out = out;

  if (auto r = root.sub("data")) {
    std::string nodes, edges;
    r->get("nodes", nodes);
    r->get("edges", edges);
    c.data.nodes = nodes;
    c.data.edges = edges;
    r->get("num_classes", c.data.num_classes);
    r->get("fill_features_from_provider", c.data.fill_features_from_provider);
    r->finish();
  }
  if (auto r = root.sub("synth")) {
    auto& s = c.synth;
    r->get("num_nodes", s.num_nodes);
    r->get("num_classes", s.num_classes);
    r->get("mean_degree", s.mean_degree);
    r->get("feature_noise", s.feature_noise);
    r->get("feature_jitter", s.feature_jitter);
    r->get("text_noise", s.text_noise);
    r->get("words_per_class", s.words_per_class);
    r->get("class_tokens_per_text", s.class_tokens_per_text);
    r->get("shared_tokens_per_text", s.shared_tokens_per_text);
    if (const json* mix = r->raw("mixture")) {
      if (!mix->is_array()) throw ConfigError("synth.mixture must be an array");
      s.homophily_mixture.clear();
      for (std::size_t i = 0; i < mix->size(); ++i) {
        Reader m((*mix)[i], "synth.mixture[" + std::to_string(i) + "]");
        MixtureComponent comp;
        m.get("target", comp.target);
        m.get("fraction", comp.fraction);
        double tn = -1.0;
        m.get("text_noise", tn);
        if (tn >= 0.0) comp.text_noise = tn;
        m.finish();
        s.homophily_mixture.push_back(comp);
      }
    }
    r->finish();
  }
  if (auto r = root.sub("gnn")) {
    r->get("num_layers", c.gnn.num_layers);
    r->get("hidden", c.gnn.hidden);
    read_train(*r, c.gnn.train);
    r->finish();
  }
  if (auto r = root.sub("q")) {
    r->get("hidden", c.q.hidden);
    read_train(*r, c.q.train);
    r->finish();
  }
  if (auto r = root.sub("provider")) {
    auto& p = c.provider;
    r->get("kind", p.kind);
    r->get("dim", p.dim);
    r->get("mock_seed", p.mock_seed);
    r->get("words_per_class", p.words_per_class);
    r->get("endpoint", p.endpoint);
    r->get("model", p.model);
    r->get("max_retries", p.max_retries);
    r->get("backoff_ms", p.backoff_ms);
    r->get("timeout_s", p.timeout_s);
    r->get("request_batch", p.request_batch);
    r->get("use_cache_file", p.use_cache_file);
    std::string cache;
    r->get("cache", cache);
    if (!cache.empty()) p.cache = cache;
    r->finish();
  }
  if (auto r = root.sub("glance")) {
    auto& g = c.glance;
    r->get("beta", g.beta);
    r->get("lambda_router", g.lambda_router);
    r->get("lambda_entropy", g.lambda_entropy);
    r->get("k_start", g.schedule.k_start);
    r->get("k_end", g.schedule.k_end);
    r->get("decay", g.schedule.decay);
    r->get("batch_size", g.batch_size);
    r->get("k_test", g.k_test);
    r->get("train_cap", g.train_cap);
    r->get("max_epochs", g.max_epochs);
    r->get("patience", g.patience);
    r->get("router_lr", g.router_lr);
    r->get("refiner_lr", g.refiner_lr);
    r->get("weight_decay", g.weight_decay);
    r->get("clip_norm", g.clip_norm);
    r->get("refiner_hidden", g.refiner_hidden);
    r->get("refiner_dropout", g.refiner_dropout);
    std::string mode = "as_written";
    r->get("router_loss", mode);
    if (mode == "as_written") {
      g.router_loss = RouterLossMode::as_written;
    } else if (mode == "action_likelihood") {
      g.router_loss = RouterLossMode::action_likelihood;
    } else {
      throw ConfigError("glance.router_loss must be 'as_written' or 'action_likelihood'");
    }
    r->get("ablated_features", g.ablated_features);
    r->get("uncertainty_passes", g.uncertainty.passes);
    r->get("uncertainty_rate", g.uncertainty.rate);
    std::string kind = "entropy";
    r->get("uncertainty_kind", kind);
    if (kind == "entropy") {
      g.uncertainty.kind = UncertaintyKind::entropy;
    } else if (kind == "disagreement") {
      g.uncertainty.kind = UncertaintyKind::disagreement;
    } else {
      throw ConfigError("glance.uncertainty_kind must be 'entropy' or 'disagreement'");
    }
    r->get("zero_empty_segments", g.embed.zero_empty_segments);
    r->get("class_names", g.class_names);
    r->get("node_char_budget", g.prompts.node_char_budget);
    r->get("ego_max_chars", g.prompts.ego_max_chars);
    r->get("hop_max_chars", g.prompts.hop_max_chars);
    r->get("neighbor_cap", g.prompts.neighbor_cap);
    r->finish();
  }
  if (auto r = root.sub("eval")) {
    r->get("bin_edges", c.eval.bin_edges);
    r->get("heuristic_fractions", c.eval.heuristic_fractions);
    r->finish();
  }
  if (auto r = root.sub("sweep")) {
    r->get("learning_rates", c.sweep.learning_rates);
    r->get("weight_decays", c.sweep.weight_decays);
    r->get("betas", c.sweep.betas);
    r->finish();
  }
  root.finish();

  c.synth.seed = c.data_seed();
  c.gnn.train.seed = c.gnn_seed();
  c.q.train.seed = c.q_seed();
  c.glance.seed = c.router_seed();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& c) {
  json mixture = json::array();
  for (const auto& m : c.synth.homophily_mixture) {
    json e{{"target", m.target}, {"fraction", m.fraction}};
    if (m.text_noise) e["text_noise"] = *m.text_noise;
    mixture.push_back(std::move(e));
  }
  const auto& g = c.glance;
  json glance = g.to_json();
  glance.erase("seed");
  glance["class_names"] = g.class_names;
  glance["node_char_budget"] = g.prompts.node_char_budget;
  glance["ego_max_chars"] = g.prompts.ego_max_chars;
  glance["hop_max_chars"] = g.prompts.hop_max_chars;
  glance["neighbor_cap"] = g.prompts.neighbor_cap;
  json gnn = train_json(c.gnn.train);
  gnn["num_layers"] = c.gnn.num_layers;
  gnn["hidden"] = c.gnn.hidden;
  json q = train_json(c.q.train);
  q["hidden"] = c.q.hidden;
  json provider{{"kind", c.provider.kind},
                {"dim", c.provider.dim},
                {"mock_seed", c.provider.mock_seed},
                {"words_per_class", c.provider.words_per_class},
                {"endpoint", c.provider.endpoint},
                {"model", c.provider.model},
                {"max_retries", c.provider.max_retries},
                {"backoff_ms", c.provider.backoff_ms},
                {"timeout_s", c.provider.timeout_s},
                {"request_batch", c.provider.request_batch},
                {"use_cache_file", c.provider.use_cache_file}};
  if (c.provider.cache) provider["cache"] = path_str(*c.provider.cache);
  return json{{"seed", c.seed},
              {"out", path_str(c.out)},
              {"data",
               {{"nodes", path_str(c.data.nodes)},
                {"edges", path_str(c.data.edges)},
                {"num_classes", c.data.num_classes},
                {"fill_features_from_provider", c.data.fill_features_from_provider}}},
              {"synth",
               {{"num_nodes", c.synth.num_nodes},
                {"num_classes", c.synth.num_classes},
                {"mean_degree", c.synth.mean_degree},
                {"mixture", std::move(mixture)},
                {"feature_noise", c.synth.feature_noise},
                {"feature_jitter", c.synth.feature_jitter},
                {"text_noise", c.synth.text_noise},
                {"words_per_class", c.synth.words_per_class},
                {"class_tokens_per_text", c.synth.class_tokens_per_text},
                {"shared_tokens_per_text", c.synth.shared_tokens_per_text}}},
              {"gnn", std::move(gnn)},
              {"q", std::move(q)},
              {"provider", std::move(provider)},
              {"glance", std::move(glance)},
              {"eval", {{"bin_edges", c.eval.bin_edges}, {"heuristic_fractions", c.eval.heuristic_fractions}}},
              {"sweep",
               {{"learning_rates", c.sweep.learning_rates},
                {"weight_decays", c.sweep.weight_decays},
                {"betas", c.sweep.betas}}}};
}

}  // namespace glance
