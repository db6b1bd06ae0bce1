#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "glance/graph.hpp"

namespace glance {

// Token pools used to write synthetic node texts. Class words carry the label
// signal; shared words are label-independent filler. The pools are a pure
// function of (num_classes, words_per_class) so consumers such as the mock
// embedder can rebuild them without reading the generator config.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  ClassVocabulary(int num_classes, int words_per_class, int shared_words = 32);

  int num_classes() const { return static_cast<int>(class_words_.size()); }
  const std::vector<std::string>& class_words(int c) const { return class_words_[c]; }
  const std::vector<std::string>& shared_words() const { return shared_words_; }

  // Class owning `token`, if any.
  std::optional<int> token_class(std::string_view token) const;

 private:
  std::vector<std::vector<std::string>> class_words_;
  std::vector<std::string> shared_words_;
};

struct MixtureComponent {
  double target = 1.0;    // requested local homophily
  double fraction = 1.0;  // share of nodes
  std::optional<double> text_noise;  // overrides SynthConfig::text_noise for this group
};

struct SynthConfig {
  std::size_t num_nodes = 2000;
  int num_classes = 4;
  double mean_degree = 8.0;
  std::vector<MixtureComponent> homophily_mixture{{1.0, 1.0, std::nullopt}};
  double feature_noise = 0.3;   // prob. of replacing the one-hot with a random class's one-hot
  double feature_jitter = 0.05; // std of additive gaussian noise on features
  double text_noise = 0.1;      // prob. a class token is drawn from a random class's pool
  int words_per_class = 16;
  int class_tokens_per_text = 8;
  int shared_tokens_per_text = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  TextAttributedGraph graph;
  std::vector<std::size_t> group;             // mixture component per node
  std::vector<double> group_mean_realized;    // mean h_v per component (non-isolated)
  std::vector<double> group_mean_abs_error;   // mean |h_v - target| per component
  int attempts = 1;
};

// Planted-homophily generator: every node receives a degree and a number of
// same-label edge stubs round(target * degree); same-label stubs are matched
// within a class and the remainder across classes. Throws ConfigError when a
// group misses its target by more than 0.05 after bounded retries.
SynthResult synth_generate(const SynthConfig& cfg);

}  // namespace glance
