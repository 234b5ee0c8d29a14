#pragma once

#include <array>
#include <span>
#include <vector>

#include "hybridlink/se3.hpp"

namespace hybridlink {

struct ErrorMetrics {
  double rmse = 0.0;
  double rrmse = 0.0;  // percent of the mean of the two signals' ranges
  int samples = 0;
};

/// RMSE and RMSE * 100 / (0.5 (range(truth) + range(estimate))), over the
/// samples where `mask` is true (all samples when the mask is empty). Throws
/// DimensionMismatch for unequal lengths, InvalidArgument for fewer than two
/// samples and DegenerateRange when the mean range is below 1e-9 (1 + max |value|).
ErrorMetrics compute_rrmse(std::span<const double> estimate, std::span<const double> truth,
                           const std::vector<bool>& mask = {});

/// Per-axis compute_rrmse of 3-vector series.
std::array<ErrorMetrics, 3> compute_rrmse(std::span<const Vec3> estimate,
                                          std::span<const Vec3> truth,
                                          const std::vector<bool>& mask = {});

/// RMSE * 100 / reference over the masked samples; used for muscle tensions
/// normalized by the largest f_max. Throws InvalidArgument if reference <= 0.
double normalized_rmse(std::span<const double> estimate, std::span<const double> truth,
                       double reference, const std::vector<bool>& mask = {});

}  // namespace hybridlink
