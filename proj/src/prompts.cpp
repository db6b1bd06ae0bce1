#include "glance/prompts.hpp"

#include "glance/errors.hpp"
#include "glance/metrics.hpp"

namespace glance {

std::string utf8_truncate(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

std::vector<std::string> default_class_names(int num_classes) {
  std::vector<std::string> out;
  for (int c = 0; c < num_classes; ++c) out.push_back("class_" + std::to_string(c));
  return out;
}

namespace {

std::string header(const std::vector<std::string>& class_names) {
  std::string h = "Instruct: Predict the node's category from the provided context.\nPossible categories: [";
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (i) h += ", ";
    h += class_names[i];
  }
  h += "].\nQuery:\n";
  return h;
}

// header + body + terminator, trimming the body so the whole prompt fits.
std::string assemble(const std::string& head, const std::string& body, std::size_t max_chars) {
  const std::string tail = std::string(kPromptTerminator);
  std::string trimmed = body;
  const std::size_t fixed = head.size() + tail.size();
  if (fixed + trimmed.size() > max_chars) {
    const std::size_t room = max_chars > fixed ? max_chars - fixed : 0;
    trimmed = utf8_truncate(trimmed, room);
    if (!trimmed.empty() && trimmed.back() != '\n') {
      trimmed = utf8_truncate(trimmed, room - 1) + '\n';
    }
  }
  return head + trimmed + tail;
}

}  // namespace

PromptBundle serialize_prompts(const TextAttributedGraph& g, NodeId v,
                               const std::vector<std::string>& class_names, std::uint64_t seed,
                               const PromptLimits& limits) {
  if (class_names.size() != static_cast<std::size_t>(g.num_classes())) {
    throw ConfigError("serialize_prompts: class_names size != num_classes");
  }
  auto node_text = [&](NodeId u) {
    std::string t = utf8_truncate(g.text(u), limits.node_char_budget);
    for (char& ch : t) {
      if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return t;
  };
  const std::string head = header(class_names);
  const std::string ego_block = "EGO:\n" + node_text(v) + "\n";

  PromptBundle bundle;
  bundle.ego = assemble(head, ego_block, limits.ego_max_chars);

  const auto sampled = sample_khop(g, v, 2, limits.neighbor_cap, seed);
  std::string hop1 = ego_block + "HOP1:\n";
  std::string hop2 = ego_block + "HOP2:\n";
  for (const auto& hn : sampled) {
    if (hn.hop == 1) {
      hop1 += "- " + node_text(hn.node) + "\n";
      ++bundle.hop1_count;
    } else {
      hop2 += "- " + node_text(hn.node) + "\n";
      ++bundle.hop2_count;
    }
  }
  bundle.hop1 = assemble(head, hop1, limits.hop_max_chars);
  bundle.hop2 = assemble(head, hop2, limits.hop_max_chars);
  return bundle;
}

}  // namespace glance
