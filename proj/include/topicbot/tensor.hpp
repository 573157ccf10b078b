#pragma once

// Dense double-precision arithmetic shared by every module.

#include <Eigen/Dense>

#include <cstddef>
#include <span>

namespace topicbot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

double sigmoid(double x);
Vector sigmoid(const Vector& x);
Vector tanh(const Vector& x);

/// Softmax with max-subtraction. An empty input gives an empty output.
Vector softmax(const Vector& scores);

/// log(sum(exp(x))) without overflow. Returns -inf for an empty input.
double log_sum_exp(const Vector& x);

/// Naive product used where the summation order must be fixed.
Matrix matmul_naive(const Matrix& a, const Matrix& b);

/// True when every entry is finite.
bool all_finite(const Matrix& m);

/// Lowest index of the maximum entry.
Index argmax(std::span<const double> values);

}  // namespace topicbot
