#include "topicbot/param_store.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace topicbot {

Matrix& ParamStore::add(const std::string& name, Index rows, Index cols) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  if (rows < 0 || cols < 0) {
    throw std::invalid_argument("negative shape for parameter " + name);
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols),
                           Matrix::Zero(rows, cols)});
  return entries_.back().value;
}

bool ParamStore::contains(const std::string& name) const {
  return index_.contains(name);
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second];
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second];
}

Matrix& ParamStore::value(const std::string& name) { return entry(name).value; }
const Matrix& ParamStore::value(const std::string& name) const {
  return entry(name).value;
}
Matrix& ParamStore::grad(const std::string& name) { return entry(name).grad; }
const Matrix& ParamStore::grad(const std::string& name) const {
  return entry(name).grad;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& e : entries_) sq += e.grad.squaredNorm();
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& e : entries_) e.grad *= scale;
  }
  return norm;
}

void ParamStore::adagrad_step(double lr, double eps) {
  for (auto& e : entries_) {
    const Index n = e.value.size();
    double* theta = e.value.data();
    const double* g = e.grad.data();
    double* acc = e.sq_grad_sum.data();
    for (Index i = 0; i < n; ++i) {
      // Untouched coordinates leave both θ and G unchanged.
      if (g[i] == 0.0) continue;
      acc[i] += g[i] * g[i];
      theta[i] -= lr * g[i] / std::sqrt(acc[i] + eps);
    }
  }
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() ||
        a.value.cols() != b.value.cols()) {
      return false;
    }
    if (a.value != b.value) return false;
  }
  return true;
}

ParamStore init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParamStore store;
  store.set_seed(seed);
  std::mt19937_64 rng(seed);
  for (const auto& spec : specs) {
    Matrix& m = store.add(spec.name, spec.rows, spec.cols);
    if (spec.kind == ParamKind::kBias) continue;
    const double fan_in = static_cast<double>(spec.cols);
    const double fan_out = static_cast<double>(spec.rows);
    const double bound = std::sqrt(6.0 / std::max(1.0, fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
  }
  return store;
}

}  // namespace topicbot
