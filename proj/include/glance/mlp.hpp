#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "glance/matrix.hpp"
#include "glance/rng.hpp"

namespace glance {

// Mutable / read-only views over every parameter tensor of a model, in a
// fixed order. Optimizers and clipping operate on these.
using ParamViews = std::vector<std::span<double>>;
using ConstParamViews = std::vector<std::span<const double>>;

ConstParamViews const_views(const ParamViews& views);

enum class Activation { relu, identity };

struct DenseLayer {
  Matrix weight;  // in x out
  std::vector<double> bias;
  Activation act = Activation::identity;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class MlpModel {
 public:
  MlpModel() = default;
  explicit MlpModel(std::vector<DenseLayer> layers);

  // He-initialized relu stack with an identity final layer.
  static MlpModel create(std::span<const std::size_t> dims, Rng& rng);

  std::size_t input_dim() const { return layers_.front().weight.rows(); }
  std::size_t output_dim() const { return layers_.back().weight.cols(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  ParamViews parameters();

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  void validate() const;
  std::vector<DenseLayer> layers_;
};

struct MlpCache {
  std::vector<Matrix> inputs;       // input to each layer (after dropout)
  std::vector<Matrix> pre;          // pre-activation of each layer
  std::vector<Matrix> masks;        // dropout mask applied to each layer's input; empty = none
};

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  ParamViews views();
};

struct MlpForward {
  Matrix output;
  MlpCache cache;
};

struct MlpBackward {
  MlpGradients grads;
  Matrix grad_input;
};

// Dropout is applied to hidden activations (inputs of every layer after the
// first) and only when `rng` is provided.
MlpForward mlp_forward(const MlpModel& model, const Matrix& x, double dropout_rate = 0.0,
                       Rng* rng = nullptr);
MlpBackward mlp_backward(const MlpModel& model, const MlpCache& cache, const Matrix& grad_output);

struct DropoutResult {
  Matrix output;
  Matrix mask;  // 0 or 1/(1-rate)
};

// Inverted dropout: survivors are scaled by 1/(1-rate).
DropoutResult dropout_apply(const Matrix& x, double rate, Rng& rng);

}  // namespace glance
