#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "glance/prompts.hpp"
#include "glance/synth.hpp"

namespace glance {

// A frozen text encoder. Implementations must be safe to call concurrently.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::size_t dim() const = 0;
  // Identifies the model behind the vectors; part of every cache key.
  virtual std::string fingerprint() const = 0;
  virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& prompts) = 0;
};

// Deterministic stand-in for an LLM embedder. The first num_classes
// coordinates are the normalized class-token histogram of the text; the rest
// are small pseudo-random values seeded by a hash of the text.
std::vector<double> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed,
                               const ClassVocabulary& vocab);

class MockEmbedder final : public EmbeddingBackend {
 public:
  MockEmbedder(std::size_t dim, std::uint64_t seed, ClassVocabulary vocab);
  std::size_t dim() const override { return dim_; }
  std::string fingerprint() const override;
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& prompts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  ClassVocabulary vocab_;
};

struct HttpEmbedderConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1
  std::string model;
  std::size_t dim = 0;
  int max_retries = 3;
  int backoff_ms = 200;
  int timeout_s = 60;
  std::string api_key;  // sent as a bearer token when nonempty
};

// OpenAI-compatible POST {endpoint}/embeddings client with bounded retries
// and exponential backoff on connection errors, 429 and 5xx.
class HttpEmbedder final : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(HttpEmbedderConfig config);
  std::size_t dim() const override { return config_.dim; }
  std::string fingerprint() const override;
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& prompts) override;

  std::size_t requests() const { return requests_.load(); }
  std::size_t retries() const { return retries_.load(); }

 private:
  HttpEmbedderConfig config_;
  std::string base_;  // scheme://host:port
  std::string path_;  // prefix + /embeddings
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> retries_{0};
};

// Content-addressed vector store, optionally persisted as JSON Lines
// {"k": hex sha256, "d": dim, "v": [...]}. Reads are concurrent; appends are
// serialized.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(const std::filesystem::path& path);

  std::optional<std::vector<double>> get(const std::string& key) const;
  // Returns false when the key was already present.
  bool put(const std::string& key, std::span<const double> vec);

  std::size_t size() const;
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::optional<std::ofstream> file_;
  std::vector<std::string> warnings_;
};

// Backend plus cache. Counts the prompts actually sent to the backend.
class EmbeddingProvider {
 public:
  EmbeddingProvider(std::unique_ptr<EmbeddingBackend> backend,
                    std::shared_ptr<EmbeddingCache> cache = std::make_shared<EmbeddingCache>(),
                    std::size_t request_batch = 64);

  std::size_t dim() const { return backend_->dim(); }
  std::string cache_key(std::string_view prompt) const;

  // Vectors in input order. Misses are deduplicated and sent in batches of
  // at most request_batch prompts.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& prompts);

  std::size_t backend_calls() const { return backend_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }
  EmbeddingBackend& backend() { return *backend_; }
  EmbeddingCache& cache() { return *cache_; }

 private:
  std::unique_ptr<EmbeddingBackend> backend_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::size_t request_batch_;
  std::string fingerprint_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

void l2_normalize(std::span<double> v);

struct EmbedOptions {
  // Zero the hop segments of nodes with no sampled neighbors instead of
  // embedding the ego-only fallback prompt.
  bool zero_empty_segments = false;
};

// z_L = [ego ‖ hop1 ‖ hop2], each segment l2-normalized.
std::vector<double> embed_node(EmbeddingProvider& provider, const PromptBundle& bundle,
                               const EmbedOptions& options = {});

// Batched form: one provider call for all bundles' prompts.
std::vector<std::vector<double>> embed_nodes(EmbeddingProvider& provider,
                                             std::span<const PromptBundle> bundles,
                                             const EmbedOptions& options = {});

}  // namespace glance
