#pragma once

#include "topicbot/tensor.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace topicbot {

enum class ParamKind { kWeight, kBias };

struct ParamSpec {
  std::string name;
  Index rows = 0;
  Index cols = 1;
  ParamKind kind = ParamKind::kWeight;
};

/// Named trainable tensors with their gradients and Adagrad accumulators.
///
/// Entries keep insertion order; that order is the serialization order and
/// the order in which the seeded initializer draws values.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix sq_grad_sum;
  };

  ParamStore() = default;

  /// Adds a zero-initialized parameter. Throws on a duplicate name.
  Matrix& add(const std::string& name, Index rows, Index cols);

  bool contains(const std::string& name) const;
  Matrix& value(const std::string& name);
  const Matrix& value(const std::string& name) const;
  Matrix& grad(const std::string& name);
  const Matrix& grad(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t parameter_count() const;
  void zero_grad();
  double grad_norm() const;
  /// Rescales gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  /// θ ← θ − lr·g/√(G+ε) with G the running sum of squared gradients.
  void adagrad_step(double lr, double eps);

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  bool operator==(const ParamStore& other) const;

 private:
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t seed_ = 0;
};

/// Weights ~ Uniform(−a, a) with a = sqrt(6/(fan_in+fan_out)); biases 0.
/// Deterministic per seed. Throws std::invalid_argument on duplicate names.
ParamStore init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);

}  // namespace topicbot
