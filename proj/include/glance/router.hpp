#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "glance/graph.hpp"
#include "glance/matrix.hpp"
#include "json.hpp"

namespace glance {

// Segment names, in layout order.
inline constexpr const char* kSegGnnEmbedding = "gnn_embedding";
inline constexpr const char* kSegUncertainty = "uncertainty";
inline constexpr const char* kSegSoftHomophily = "soft_homophily";
inline constexpr const char* kSegFeatures = "features";
inline constexpr const char* kSegDegree = "degree";

const std::vector<std::string>& routing_segment_names();
bool is_scalar_segment(const std::string& name);

struct LayoutSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t dim = 0;
  friend bool operator==(const LayoutSegment&, const LayoutSegment&) = default;
};

class FeatureLayout {
 public:
  FeatureLayout() = default;
  // Segments are laid out in the given order with consecutive offsets.
  explicit FeatureLayout(const std::vector<std::pair<std::string, std::size_t>>& segments);

  const std::vector<LayoutSegment>& segments() const { return segments_; }
  std::size_t total_dim() const { return total_; }
  const LayoutSegment* find(const std::string& name) const;

  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json& j);

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;

 private:
  std::vector<LayoutSegment> segments_;
  std::size_t total_ = 0;
};

struct ScalarStats {
  double mean = 0.0;
  double std = 1.0;  // floored at 1e-6
};

struct RouterInputs {
  const Matrix* gnn_embedding = nullptr;  // n x hidden
  std::span<const double> uncertainty;
  std::span<const double> soft_homophily;
  const Matrix* features = nullptr;  // n x d
  std::span<const double> degree;
};

// z-score statistics of the scalar segments over `rows` (the train split).
std::map<std::string, ScalarStats> scalar_stats(const RouterInputs& in, std::span<const NodeId> rows);

struct RoutingFeatures {
  FeatureLayout layout;
  Matrix values;  // n x layout.total_dim()
};

// f_v = [z_G ‖ uncertainty ‖ soft ĥ ‖ x ‖ degree] minus any ablated segment.
// Scalar segments are standardized with `stats`; vector segments pass through.
RoutingFeatures assemble_features(const RouterInputs& in,
                                  const std::map<std::string, ScalarStats>& stats,
                                  const std::set<std::string>& ablated = {});

struct RouterPolicy {
  std::vector<double> w;
  double bias = 0.0;

  double logit(std::span<const double> f) const;
  nlohmann::json to_json(const FeatureLayout& layout) const;
  static RouterPolicy from_json(const nlohmann::json& j, FeatureLayout* layout = nullptr);
};

double sigmoid(double x);

// a_v = σ(wᵀ f_v + b)
double route_score(const RouterPolicy& policy, std::span<const double> f);

// min(K, n) positions with the highest scores; ties go to the smaller id
// (ids default to positions). Result is sorted by position.
std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k,
                                     std::span<const NodeId> ids = {});

struct BudgetSchedule {
  int k_start = 32;
  int k_end = 8;
  double decay = 0.5;

  void validate(int batch_size) const;
};

// K_t = round(K_end + (K_start - K_end) r^{t-1}), t >= 1.
int schedule_k(const BudgetSchedule& schedule, int epoch);

enum class RouterLossMode {
  as_written,         // -r log π(f) for routed and non-routed nodes
  action_likelihood,  // -r log(1 - π(f)) for non-routed nodes
};

struct RouterLossGrad {
  double loss = 0.0;
  double score = 0.0;        // clamped a_v
  double grad_logit = 0.0;   // d loss / d (wᵀf + b)
  std::vector<double> grad_w;
  double grad_bias = 0.0;
};

inline constexpr double kScoreClamp = 1e-7;

// -r log π(f) - λ H(π(f)) with its closed-form gradient.
RouterLossGrad router_loss_grad(const RouterPolicy& policy, std::span<const double> f,
                                double reward, double lambda_entropy, bool routed = true,
                                RouterLossMode mode = RouterLossMode::as_written);

}  // namespace glance
