#pragma once

#include "topicbot/param_store.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace topicbot {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the analytic gradients already stored in `params` against central
/// differences (L(θ+h) − L(θ−h)) / 2h.
///
/// Checks every coordinate when the store holds at most `min_coords` of them,
/// otherwise a seeded random subsample of `min_coords` coordinates. The
/// relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
/// Parameter values are restored exactly afterwards.
///
/// Throws std::invalid_argument for h outside [1e-7, 1e-3] and
/// std::runtime_error when the loss is not finite.
GradCheckReport fd_gradient_check(const std::function<double(const ParamStore&)>& loss,
                                  ParamStore& params, double h,
                                  std::size_t min_coords = 200,
                                  std::uint64_t seed = 0);

}  // namespace topicbot
