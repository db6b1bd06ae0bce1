#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "glance/matrix.hpp"

namespace glance {

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

// -log softmax(logits)[label] with max-subtraction; no probability floor.
CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label);

std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

struct BatchCrossEntropy {
  double mean_loss = 0.0;
  Matrix grad;  // same shape as logits; rows outside `rows` are zero
};

// Mean cross-entropy over the selected rows of `logits`.
BatchCrossEntropy mean_cross_entropy(const Matrix& logits, std::span<const std::size_t> rows,
                                     std::span<const int> labels);

// Shannon entropy in nats.
double entropy(std::span<const double> p);

}  // namespace glance
