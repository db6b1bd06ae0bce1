#include "glance/mlp.hpp"

#include <cmath>
#include <string>

#include "glance/errors.hpp"

namespace glance {

ConstParamViews const_views(const ParamViews& views) {
  return ConstParamViews(views.begin(), views.end());
}

MlpModel::MlpModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

void MlpModel::validate() const {
  if (layers_.empty()) throw ConfigError("MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.cols()) {
      throw ConfigError("MLP layer " + std::to_string(l) + ": bias size mismatch");
    }
    if (l > 0 && layers_[l - 1].weight.cols() != layer.weight.rows()) {
      throw ConfigError("MLP layer " + std::to_string(l) + ": dims do not chain");
    }
  }
  if (layers_.back().act != Activation::identity) {
    throw ConfigError("MLP final layer must use the identity activation");
  }
}

MlpModel MlpModel::create(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("MLP dims need input and output");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weight = Matrix(dims[l], dims[l + 1]);
    const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (double& w : layer.weight.values()) w = scale * rng.normal();
    layer.bias.assign(dims[l + 1], 0.0);
    layer.act = l + 2 == dims.size() ? Activation::identity : Activation::relu;
    layers.push_back(std::move(layer));
  }
  return MlpModel(std::move(layers));
}

ParamViews MlpModel::parameters() {
  ParamViews out;
  for (auto& layer : layers_) {
    out.push_back(layer.weight.values());
    out.push_back(layer.bias);
  }
  return out;
}

ParamViews MlpGradients::views() {
  ParamViews out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.push_back(weight[l].values());
    out.push_back(bias[l]);
  }
  return out;
}

DropoutResult dropout_apply(const Matrix& x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  DropoutResult out{x, Matrix(x.rows(), x.cols(), 1.0)};
  if (rate == 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto o = out.output.values();
  auto m = out.mask.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    m[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    o[i] *= m[i];
  }
  return out;
}

MlpForward mlp_forward(const MlpModel& model, const Matrix& x, double dropout_rate, Rng* rng) {
  if (x.cols() != model.input_dim()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                      std::to_string(model.input_dim()));
  }
  MlpForward out;
  const auto& layers = model.layers();
  out.cache.inputs.reserve(layers.size());
  out.cache.pre.reserve(layers.size());
  out.cache.masks.resize(layers.size());
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l > 0 && rng && dropout_rate > 0.0) {
      auto dropped = dropout_apply(h, dropout_rate, *rng);
      h = std::move(dropped.output);
      out.cache.masks[l] = std::move(dropped.mask);
    }
    Matrix pre = matmul(h, layers[l].weight);
    add_row_vector(pre, layers[l].bias);
    out.cache.inputs.push_back(std::move(h));
    h = pre;
    if (layers[l].act == Activation::relu) {
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
    }
    out.cache.pre.push_back(std::move(pre));
  }
  require_finite(h, "mlp_forward output");
  out.output = std::move(h);
  return out;
}

MlpBackward mlp_backward(const MlpModel& model, const MlpCache& cache, const Matrix& grad_output) {
  const auto& layers = model.layers();
  if (cache.inputs.size() != layers.size() || cache.pre.size() != layers.size()) {
    throw ConfigError("mlp_backward: cache does not match model");
  }
  if (grad_output.cols() != model.output_dim() || grad_output.rows() != cache.pre.back().rows()) {
    throw ConfigError("mlp_backward: grad_output shape mismatch");
  }
  MlpBackward out;
  out.grads.weight.resize(layers.size());
  out.grads.bias.resize(layers.size());
  Matrix g = grad_output;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (layers[l].act == Activation::relu) {
      auto gv = g.values();
      const auto pv = cache.pre[l].values();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (pv[i] <= 0.0) gv[i] = 0.0;
      }
    }
    out.grads.weight[l] = matmul_tn(cache.inputs[l], g);
    out.grads.bias[l] = column_sums(g);
    g = matmul_nt(g, layers[l].weight);
    if (!cache.masks[l].empty()) g = hadamard(g, cache.masks[l]);
  }
  out.grad_input = std::move(g);
  return out;
}

}  // namespace glance
