#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glance/graph.hpp"

namespace glance {

// Bumped whenever the templates below change; it prefixes embedding cache
// keys so stale vectors are never reused.
inline constexpr const char* kPromptTemplateVersion = "glance-prompt-v1";
inline constexpr const char* kPromptTerminator = "Category?\n</END>";

struct PromptLimits {
  std::size_t node_char_budget = 2000;
  std::size_t ego_max_chars = 1024;
  std::size_t hop_max_chars = 4096;
  std::size_t neighbor_cap = 5;
};

struct PromptBundle {
  std::string ego;
  std::string hop1;
  std::string hop2;
  std::size_t hop1_count = 0;
  std::size_t hop2_count = 0;

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

// Ego, ego+1-hop and ego+2-hop prompts in the instruction/query layout.
// Neighbors come from sample_khop with the given seed.
PromptBundle serialize_prompts(const TextAttributedGraph& g, NodeId v,
                               const std::vector<std::string>& class_names, std::uint64_t seed,
                               const PromptLimits& limits = {});

std::vector<std::string> default_class_names(int num_classes);

// Longest prefix of `s` of at most `max_bytes` that does not split a UTF-8 sequence.
std::string utf8_truncate(std::string_view s, std::size_t max_bytes);

}  // namespace glance
