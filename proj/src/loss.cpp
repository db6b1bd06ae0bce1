#include "glance/loss.hpp"

#include <cmath>

#include "glance/errors.hpp"

namespace glance {

CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ConfigError("cross entropy: label out of range");
  require_finite(logits, "logits");
  const std::size_t top = argmax(logits);
  const double m = logits[top];
  double rest = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k != top) rest += std::exp(logits[k] - m);
  }
  const double log_z = std::log1p(rest);  // log sum exp(l - m)
  CrossEntropy out;
  out.loss = log_z - (logits[label] - m);
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.grad[k] = std::exp(logits[k] - m - log_z) - (k == label ? 1.0 : 0.0);
  }
  // p_label - 1 loses precision when p_label ~ 1; use -(sum of the others).
  double others = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k != label) others += out.grad[k];
  }
  out.grad[label] = -others;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = logits[argmax(logits)];
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - m));
  for (double& x : p) x /= z;
  return p;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

BatchCrossEntropy mean_cross_entropy(const Matrix& logits, std::span<const std::size_t> rows,
                                     std::span<const int> labels) {
  if (rows.empty()) throw ConfigError("mean_cross_entropy: no rows selected");
  BatchCrossEntropy out{0.0, Matrix(logits.rows(), logits.cols())};
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    const auto ce = softmax_cross_entropy(logits.row(r), static_cast<std::size_t>(labels[r]));
    out.mean_loss += ce.loss * inv;
    auto g = out.grad.row(r);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += ce.grad[k] * inv;
  }
  if (!std::isfinite(out.mean_loss)) throw DivergenceError("non-finite cross-entropy loss");
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

}  // namespace glance
