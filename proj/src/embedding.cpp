#include "glance/embedding.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <thread>
#include <unordered_set>

#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"
#include "glance/rng.hpp"
#include "httplib.h"
#include "json.hpp"

namespace glance {

using nlohmann::json;

namespace {

constexpr double kMockNoiseScale = 0.1;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

std::vector<double> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed,
                               const ClassVocabulary& vocab) {
  const auto C = static_cast<std::size_t>(vocab.num_classes());
  if (dim < C + 8) throw ConfigError("mock embedder dim must be >= num_classes + 8");
  std::vector<double> out(dim, 0.0);
  double total = 0.0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_char(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && is_token_char(text[j])) ++j;
    if (j > i) {
      if (const auto c = vocab.token_class(text.substr(i, j - i))) {
        out[static_cast<std::size_t>(*c)] += 1.0;
        total += 1.0;
      }
    }
    i = j;
  }
  if (total > 0.0) {
    for (std::size_t k = 0; k < C; ++k) out[k] /= total;
  }
  Rng noise(mix_seed(seed, fnv1a(text)));
  for (std::size_t k = C; k < dim; ++k) out[k] = kMockNoiseScale * noise.uniform(-1.0, 1.0);
  return out;
}

MockEmbedder::MockEmbedder(std::size_t dim, std::uint64_t seed, ClassVocabulary vocab)
    : dim_(dim), seed_(seed), vocab_(std::move(vocab)) {
  if (dim_ < static_cast<std::size_t>(vocab_.num_classes()) + 8) {
    throw ConfigError("mock embedder dim must be >= num_classes + 8");
  }
}

std::string MockEmbedder::fingerprint() const {
  return "mock/d" + std::to_string(dim_) + "/s" + std::to_string(seed_) + "/c" +
         std::to_string(vocab_.num_classes()) + "/w" +
         std::to_string(vocab_.num_classes() ? vocab_.class_words(0).size() : 0);
}

std::vector<std::vector<double>> MockEmbedder::embed_batch(const std::vector<std::string>& prompts) {
  std::vector<std::vector<double>> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(mock_embed(p, dim_, seed_, vocab_));
  return out;
}

HttpEmbedder::HttpEmbedder(HttpEmbedderConfig config) : config_(std::move(config)) {
  if (config_.dim == 0) throw ConfigError("http provider: dim must be set");
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError("http provider: endpoint needs a scheme");
  const auto slash = config_.endpoint.find('/', scheme + 3);
  base_ = config_.endpoint.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : config_.endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/embeddings";
}

std::string HttpEmbedder::fingerprint() const {
  return "http/" + config_.model + "/d" + std::to_string(config_.dim);
}

std::vector<std::vector<double>> HttpEmbedder::embed_batch(const std::vector<std::string>& prompts) {
  if (prompts.empty()) return {};
  const std::string body = json{{"model", config_.model}, {"input", prompts}}.dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const std::string first_hash = sha256_hex(prompts.front()).substr(0, 16);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    }
    httplib::Client client(base_);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    ++requests_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError("embedding request failed with HTTP " + std::to_string(res->status), first_hash);
    }
    std::vector<std::vector<double>> out(prompts.size());
    try {
      const auto parsed = json::parse(res->body);
      const auto& data = parsed.at("data");
      if (data.size() != prompts.size()) {
        throw ProviderError("embedding response has " + std::to_string(data.size()) +
                                " vectors for " + std::to_string(prompts.size()) + " inputs",
                            first_hash);
      }
      for (const auto& item : data) {
        const auto idx = item.at("index").get<std::size_t>();
        if (idx >= out.size() || !out[idx].empty()) {
          throw ProviderError("embedding response has a bad or repeated index", first_hash);
        }
        out[idx] = item.at("embedding").get<std::vector<double>>();
        if (out[idx].size() != config_.dim) {
          throw ConfigError("embedding dim " + std::to_string(out[idx].size()) +
                            " != configured dim " + std::to_string(config_.dim));
        }
      }
    } catch (const json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what(), first_hash);
    }
    return out;
  }
  throw ProviderError("embedding request failed after " + std::to_string(config_.max_retries) +
                          " retries: " + last_error,
                      first_hash);
}

EmbeddingCache::EmbeddingCache(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = json::parse(line);
        auto key = j.at("k").get<std::string>();
        auto vec = j.at("v").get<std::vector<double>>();
        if (key.size() != 64 || vec.size() != j.at("d").get<std::size_t>()) {
          throw std::runtime_error("key or dim mismatch");
        }
        entries_.emplace(std::move(key), std::move(vec));
      } catch (const std::exception& e) {
        warnings_.push_back(path.string() + ": skipped corrupt cache record at line " +
                            std::to_string(line_no) + " (" + e.what() + ")");
        std::cerr << "warning: " << warnings_.back() << '\n';
      }
    }
  } else if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  file_.emplace(path, std::ios::app | std::ios::binary);
  if (!*file_) throw ConfigError("cannot open embedding cache " + path.string() + " for writing");
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool EmbeddingCache::put(const std::string& key, std::span<const double> vec) {
  std::lock_guard lock(mutex_);
  const auto [it, inserted] = entries_.emplace(key, std::vector<double>(vec.begin(), vec.end()));
  if (inserted && file_) {
    *file_ << json{{"k", key}, {"d", vec.size()}, {"v", it->second}}.dump() << '\n';
    file_->flush();
  }
  return inserted;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

EmbeddingProvider::EmbeddingProvider(std::unique_ptr<EmbeddingBackend> backend,
                                     std::shared_ptr<EmbeddingCache> cache,
                                     std::size_t request_batch)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      request_batch_(std::max<std::size_t>(1, request_batch)),
      fingerprint_(backend_->fingerprint()) {}

std::string EmbeddingProvider::cache_key(std::string_view prompt) const {
  std::string material = std::string(kPromptTemplateVersion) + '\x1f' + fingerprint_ + '\x1f';
  material.append(prompt);
  return sha256_hex(material);
}

std::vector<std::vector<double>> EmbeddingProvider::embed(const std::vector<std::string>& prompts) {
  std::vector<std::vector<double>> out(prompts.size());
  std::vector<std::string> keys(prompts.size());
  std::vector<std::string> misses;
  std::vector<std::string> miss_keys;
  std::unordered_set<std::string> pending;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    keys[i] = cache_key(prompts[i]);
    if (auto hit = cache_->get(keys[i])) {
      out[i] = std::move(*hit);
      ++cache_hits_;
    } else if (pending.insert(keys[i]).second) {
      misses.push_back(prompts[i]);
      miss_keys.push_back(keys[i]);
    }
  }
  for (std::size_t start = 0; start < misses.size(); start += request_batch_) {
    const std::size_t end = std::min(misses.size(), start + request_batch_);
    std::vector<std::string> chunk(misses.begin() + static_cast<std::ptrdiff_t>(start),
                                   misses.begin() + static_cast<std::ptrdiff_t>(end));
    const auto vecs = backend_->embed_batch(chunk);
    if (vecs.size() != chunk.size()) throw ProviderError("provider returned wrong vector count");
    backend_calls_ += chunk.size();
    for (std::size_t k = 0; k < vecs.size(); ++k) {
      if (vecs[k].size() != dim()) {
        throw ConfigError("provider returned dim " + std::to_string(vecs[k].size()) + ", declared " +
                          std::to_string(dim()));
      }
      cache_->put(miss_keys[start + k], vecs[k]);
    }
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (out[i].empty()) {
      auto v = cache_->get(keys[i]);
      if (!v) throw ProviderError("embedding missing after provider call", keys[i].substr(0, 16));
      out[i] = std::move(*v);
    }
  }
  return out;
}

void l2_normalize(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq <= 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

std::vector<std::vector<double>> embed_nodes(EmbeddingProvider& provider,
                                             std::span<const PromptBundle> bundles,
                                             const EmbedOptions& options) {
  std::vector<std::string> prompts;
  prompts.reserve(bundles.size() * 3);
  for (const auto& b : bundles) {
    prompts.push_back(b.ego);
    prompts.push_back(b.hop1);
    prompts.push_back(b.hop2);
  }
  const auto vecs = provider.embed(prompts);
  const std::size_t e = provider.dim();
  std::vector<std::vector<double>> out;
  out.reserve(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    std::vector<double> z(3 * e, 0.0);
    for (std::size_t s = 0; s < 3; ++s) {
      const bool empty_hop = (s == 1 && bundles[i].hop1_count == 0) || (s == 2 && bundles[i].hop2_count == 0);
      if (options.zero_empty_segments && empty_hop) continue;
      const auto& src = vecs[3 * i + s];
      std::span<double> seg(z.data() + s * e, e);
      std::copy(src.begin(), src.end(), seg.begin());
      l2_normalize(seg);
    }
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<double> embed_node(EmbeddingProvider& provider, const PromptBundle& bundle,
                               const EmbedOptions& options) {
  return embed_nodes(provider, std::span<const PromptBundle>(&bundle, 1), options).front();
}

}  // namespace glance
