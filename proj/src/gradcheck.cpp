#include "topicbot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace topicbot {

namespace {

double checked(double value) {
  if (!std::isfinite(value)) {
    throw std::runtime_error("fd_gradient_check: loss is not finite");
  }
  return value;
}

}  // namespace

GradCheckReport fd_gradient_check(const std::function<double(const ParamStore&)>& loss,
                                  ParamStore& params, double h, std::size_t min_coords,
                                  std::uint64_t seed) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw std::invalid_argument("fd_gradient_check: h must lie in [1e-7, 1e-3]");
  }

  // (entry, flat index) pairs over the whole store.
  std::vector<std::pair<std::size_t, Index>> coords;
  auto& entries = params.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    for (Index i = 0; i < entries[e].value.size(); ++i) coords.emplace_back(e, i);
  }
  if (coords.size() > min_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(min_coords);
  }

  checked(loss(params));

  GradCheckReport report;
  for (const auto& [e, i] : coords) {
    double& theta = entries[e].value.data()[i];
    const double saved = theta;
    theta = saved + h;
    const double up = checked(loss(params));
    theta = saved - h;
    const double down = checked(loss(params));
    theta = saved;

    const double numeric = (up - down) / (2.0 * h);
    const double analytic = entries[e].grad.data()[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coords_checked;
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.worst_param = entries[e].name;
      report.worst_index = i;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace topicbot
