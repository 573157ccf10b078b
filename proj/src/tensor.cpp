#include "topicbot/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace topicbot {

double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector sigmoid(const Vector& x) {
  Vector y(x.size());
  for (Index i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Vector tanh(const Vector& x) {
  Vector y(x.size());
  for (Index i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

Vector softmax(const Vector& scores) {
  if (scores.size() == 0) return scores;
  const double m = scores.maxCoeff();
  Vector e(scores.size());
  double total = 0.0;
  for (Index i = 0; i < scores.size(); ++i) {
    e[i] = std::exp(scores[i] - m);
    total += e[i];
  }
  return e / total;
}

double log_sum_exp(const Vector& x) {
  if (x.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = x.maxCoeff();
  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) total += std::exp(x[i] - m);
  return m + std::log(total);
}

Matrix matmul_naive(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul_naive: inner dimensions differ");
  }
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

bool all_finite(const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j))) return false;
    }
  }
  return true;
}

Index argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<Index>(best);
}

}  // namespace topicbot
