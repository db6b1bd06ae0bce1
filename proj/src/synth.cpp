#include "glance/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "glance/errors.hpp"
#include "glance/metrics.hpp"
#include "glance/rng.hpp"

namespace glance {

namespace {

constexpr int kMaxAttempts = 5;
constexpr double kGroupTolerance = 0.05;
constexpr std::size_t kMinCheckedGroup = 50;
constexpr std::size_t kPartnerSearch = 64;

std::uint64_t edge_key(NodeId a, NodeId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

class StubMatcher {
 public:
  explicit StubMatcher(std::size_t reserve) { existing_.reserve(reserve); }

  bool try_link(NodeId a, NodeId b) {
    if (a == b) return false;
    if (!existing_.insert(edge_key(a, b)).second) return false;
    edges_.push_back({a, b});
    return true;
  }

  // Pairs stubs within one list (same-label wiring).
  void match_within(std::vector<NodeId>& stubs) {
    while (stubs.size() >= 2) {
      const NodeId a = stubs.back();
      stubs.pop_back();
      const std::size_t lim = std::min(stubs.size(), kPartnerSearch);
      for (std::size_t k = 0; k < lim; ++k) {
        const std::size_t pos = stubs.size() - 1 - k;
        if (try_link(a, stubs[pos])) {
          stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(pos));
          break;
        }
      }
    }
  }

  // Pairs stubs from different classes. The class with the most open stubs
  // always goes first so no class is left stranded.
  void match_across(std::vector<std::vector<NodeId>>& per_class, Rng& rng) {
    for (;;) {
      std::size_t big = 0;
      std::size_t others = 0;
      for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (per_class[c].size() > per_class[big].size()) big = c;
      }
      for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (c != big) others += per_class[c].size();
      }
      if (per_class[big].empty() || others == 0) return;
      const NodeId a = per_class[big].back();
      per_class[big].pop_back();
      // Partner class chosen proportional to remaining stubs.
      std::size_t pick = rng.index(others);
      std::size_t partner = 0;
      for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (c == big) continue;
        if (pick < per_class[c].size()) {
          partner = c;
          break;
        }
        pick -= per_class[c].size();
      }
      auto& pool = per_class[partner];
      const std::size_t lim = std::min(pool.size(), kPartnerSearch);
      for (std::size_t k = 0; k < lim; ++k) {
        const std::size_t pos = pool.size() - 1 - k;
        if (try_link(a, pool[pos])) {
          pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pos));
          break;
        }
      }
    }
  }

  std::vector<Edge> take() { return std::move(edges_); }

 private:
  std::unordered_set<std::uint64_t> existing_;
  std::vector<Edge> edges_;
};

std::string make_text(NodeId id, int label, double text_noise, const SynthConfig& cfg,
                      const ClassVocabulary& vocab, Rng& rng) {
  std::vector<std::string> tokens;
  for (int i = 0; i < cfg.class_tokens_per_text; ++i) {
    int c = label;
    if (rng.bernoulli(text_noise)) c = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.num_classes)));
    const auto& pool = vocab.class_words(c);
    tokens.push_back(pool[rng.index(pool.size())]);
  }
  const auto& shared = vocab.shared_words();
  for (int i = 0; i < cfg.shared_tokens_per_text; ++i) tokens.push_back(shared[rng.index(shared.size())]);
  rng.shuffle(tokens);
  std::ostringstream os;
  os << "Record " << id << ":";
  for (const auto& t : tokens) os << ' ' << t;
  os << '.';
  return os.str();
}

SynthResult generate_once(const SynthConfig& cfg, std::uint64_t seed) {
  const std::size_t n = cfg.num_nodes;
  const auto C = static_cast<std::size_t>(cfg.num_classes);
  Rng root(seed);
  Rng label_rng = root.split(1), group_rng = root.split(2), degree_rng = root.split(3),
      wire_rng = root.split(4), feature_rng = root.split(5), text_rng = root.split(6);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % C);
  label_rng.shuffle(labels);

  // Group sizes by largest remainder so they sum to n.
  const auto& mix = cfg.homophily_mixture;
  std::vector<std::size_t> sizes(mix.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    sizes[k] = static_cast<std::size_t>(std::floor(mix[k].fraction * static_cast<double>(n)));
    assigned += sizes[k];
  }
  for (std::size_t k = 0; assigned < n; k = (k + 1) % mix.size(), ++assigned) ++sizes[k];
  std::vector<std::size_t> group;
  for (std::size_t k = 0; k < mix.size(); ++k) group.insert(group.end(), sizes[k], k);
  group_rng.shuffle(group);

  const int spread = std::max(1, static_cast<int>(std::lround(cfg.mean_degree / 4.0)));
  std::vector<std::vector<NodeId>> same(C), cross(C);
  std::size_t total_stubs = 0;
  for (NodeId v = 0; v < n; ++v) {
    const int jitter = static_cast<int>(degree_rng.index(static_cast<std::size_t>(2 * spread + 1))) - spread;
    const int d = std::max(1, static_cast<int>(std::lround(cfg.mean_degree)) + jitter);
    const int s = static_cast<int>(std::lround(mix[group[v]].target * d));
    const auto c = static_cast<std::size_t>(labels[v]);
    same[c].insert(same[c].end(), static_cast<std::size_t>(s), v);
    cross[c].insert(cross[c].end(), static_cast<std::size_t>(d - s), v);
    total_stubs += static_cast<std::size_t>(d);
  }
  StubMatcher matcher(total_stubs);
  for (auto& pool : same) {
    wire_rng.shuffle(pool);
    matcher.match_within(pool);
  }
  for (auto& pool : cross) wire_rng.shuffle(pool);
  matcher.match_across(cross, wire_rng);

  const ClassVocabulary vocab(cfg.num_classes, cfg.words_per_class);
  std::vector<NodeRecord> records(n);
  for (NodeId v = 0; v < n; ++v) {
    auto& rec = records[v];
    rec.label = labels[v];
    int shown = labels[v];
    if (feature_rng.bernoulli(cfg.feature_noise)) shown = static_cast<int>(feature_rng.index(C));
    rec.feature.assign(C, 0.0);
    rec.feature[static_cast<std::size_t>(shown)] = 1.0;
    for (double& x : rec.feature) x += cfg.feature_jitter * feature_rng.normal();
    const double tn = mix[group[v]].text_noise.value_or(cfg.text_noise);
    rec.text = make_text(v, labels[v], tn, cfg, vocab, text_rng);
  }
  const auto edges = matcher.take();

  SynthResult out;
  out.graph = TextAttributedGraph::build(std::move(records), edges, cfg.num_classes,
                                         mix_seed(seed, 7));
  out.group = std::move(group);
  out.group_mean_realized.assign(mix.size(), 0.0);
  out.group_mean_abs_error.assign(mix.size(), 0.0);
  std::vector<std::size_t> counted(mix.size(), 0);
  for (NodeId v = 0; v < n; ++v) {
    if (out.graph.is_isolated(v)) continue;
    const double h = local_homophily(out.graph, v);
    const std::size_t k = out.group[v];
    out.group_mean_realized[k] += h;
    out.group_mean_abs_error[k] += std::abs(h - mix[k].target);
    ++counted[k];
  }
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (counted[k] == 0) continue;
    out.group_mean_realized[k] /= static_cast<double>(counted[k]);
    out.group_mean_abs_error[k] /= static_cast<double>(counted[k]);
  }
  return out;
}

bool within_tolerance(const SynthResult& r, const SynthConfig& cfg) {
  for (std::size_t k = 0; k < cfg.homophily_mixture.size(); ++k) {
    const auto members = static_cast<std::size_t>(std::count(r.group.begin(), r.group.end(), k));
    if (members >= kMinCheckedGroup && r.group_mean_abs_error[k] > kGroupTolerance) return false;
  }
  return true;
}

}  // namespace

ClassVocabulary::ClassVocabulary(int num_classes, int words_per_class, int shared_words) {
  static const char* kSyllables[] = {"ka", "lo", "mi", "ru", "te", "ven", "sor", "pa",
                                     "dri", "qua", "nel", "bo", "fi", "gu", "zan", "yel"};
  auto word = [&](int a, int b, int c) {
    return std::string(kSyllables[a % 16]) + kSyllables[b % 16] + kSyllables[c % 16];
  };
  class_words_.resize(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    for (int j = 0; j < words_per_class; ++j) {
      class_words_[static_cast<std::size_t>(c)].push_back("c" + std::to_string(c) + word(j, c, j / 16));
    }
  }
  for (int j = 0; j < shared_words; ++j) shared_words_.push_back(word(j, j / 16 + 3, 7));
}

std::optional<int> ClassVocabulary::token_class(std::string_view token) const {
  // Class words are "c<k><syllables>"; verify membership after parsing k.
  if (token.size() < 2 || token[0] != 'c') return std::nullopt;
  std::size_t i = 1;
  int k = 0;
  while (i < token.size() && token[i] >= '0' && token[i] <= '9') k = k * 10 + (token[i++] - '0');
  if (i == 1 || k >= num_classes()) return std::nullopt;
  const auto& pool = class_words_[static_cast<std::size_t>(k)];
  return std::find(pool.begin(), pool.end(), token) != pool.end() ? std::optional<int>(k)
                                                                  : std::nullopt;
}

void SynthConfig::validate() const {
  if (num_nodes == 0) throw ConfigError("synth: num_nodes must be positive");
  if (num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
  if (!(mean_degree >= 1.0)) throw ConfigError("synth: mean_degree must be >= 1");
  if (homophily_mixture.empty()) throw ConfigError("synth: homophily_mixture is empty");
  double total = 0.0;
  for (const auto& m : homophily_mixture) {
    if (!(m.target >= 0.0 && m.target <= 1.0)) throw ConfigError("synth: mixture target outside [0,1]");
    if (!(m.fraction > 0.0)) throw ConfigError("synth: mixture fraction must be positive");
    if (m.text_noise && !(*m.text_noise >= 0.0 && *m.text_noise <= 1.0)) {
      throw ConfigError("synth: text_noise outside [0,1]");
    }
    total += m.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("synth: mixture fractions must sum to 1");
  if (!(feature_noise >= 0.0 && feature_noise <= 1.0)) throw ConfigError("synth: feature_noise outside [0,1]");
  if (!(text_noise >= 0.0 && text_noise <= 1.0)) throw ConfigError("synth: text_noise outside [0,1]");
  if (feature_jitter < 0.0) throw ConfigError("synth: feature_jitter must be >= 0");
  if (words_per_class < 1 || class_tokens_per_text < 1 || shared_tokens_per_text < 0) {
    throw ConfigError("synth: invalid text template sizes");
  }
}

SynthResult synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::ostringstream worst;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    auto result = generate_once(cfg, attempt == 0 ? cfg.seed : mix_seed(cfg.seed, 1000 + attempt));
    result.attempts = attempt + 1;
    if (within_tolerance(result, cfg)) return result;
    if (attempt + 1 == kMaxAttempts) {
      for (std::size_t k = 0; k < cfg.homophily_mixture.size(); ++k) {
        worst << " [target " << cfg.homophily_mixture[k].target << ": realized mean "
              << result.group_mean_realized[k] << ", mean abs error "
              << result.group_mean_abs_error[k] << "]";
      }
    }
  }
  throw ConfigError("synth: homophily mixture infeasible after " + std::to_string(kMaxAttempts) +
                    " attempts:" + worst.str());
}

}  // namespace glance
