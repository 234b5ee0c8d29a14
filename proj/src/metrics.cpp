#include "hybridlink/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

struct Window {
  double sse = 0.0;
  double lo_e = 0.0, hi_e = 0.0, lo_t = 0.0, hi_t = 0.0;
  int n = 0;
};

Window scan(std::span<const double> estimate, std::span<const double> truth,
            const std::vector<bool>& mask) {
  if (estimate.size() != truth.size()) {
    fail(ErrorCode::DimensionMismatch, "estimate and truth have different lengths");
  }
  if (!mask.empty() && mask.size() != truth.size()) {
    fail(ErrorCode::DimensionMismatch, "mask length differs from the series length");
  }
  Window w;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double e = estimate[i], t = truth[i];
    if (!std::isfinite(e) || !std::isfinite(t)) {
      fail(ErrorCode::InvalidArgument, "series contain non-finite samples");
    }
    if (w.n == 0) {
      w.lo_e = w.hi_e = e;
      w.lo_t = w.hi_t = t;
    }
    w.lo_e = std::min(w.lo_e, e);
    w.hi_e = std::max(w.hi_e, e);
    w.lo_t = std::min(w.lo_t, t);
    w.hi_t = std::max(w.hi_t, t);
    w.sse += (e - t) * (e - t);
    ++w.n;
  }
  if (w.n < 2) fail(ErrorCode::InvalidArgument, "metrics need at least two samples");
  return w;
}

}  // namespace

ErrorMetrics compute_rrmse(std::span<const double> estimate, std::span<const double> truth,
                           const std::vector<bool>& mask) {
  const Window w = scan(estimate, truth, mask);
  const double mean_range = 0.5 * ((w.hi_t - w.lo_t) + (w.hi_e - w.lo_e));
  // Ranges at round-off level of the signal magnitude count as constant.
  const double scale = std::max({std::abs(w.lo_t), std::abs(w.hi_t), std::abs(w.lo_e), std::abs(w.hi_e)});
  if (!(mean_range > 1e-9 * (1.0 + scale))) {
    fail(ErrorCode::DegenerateRange, "both series are constant over the window; rRMSE is undefined");
  }
  ErrorMetrics m;
  m.samples = w.n;
  m.rmse = std::sqrt(w.sse / w.n);
  m.rrmse = 100.0 * m.rmse / mean_range;
  return m;
}

std::array<ErrorMetrics, 3> compute_rrmse(std::span<const Vec3> estimate,
                                          std::span<const Vec3> truth,
                                          const std::vector<bool>& mask) {
  if (estimate.size() != truth.size()) {
    fail(ErrorCode::DimensionMismatch, "estimate and truth have different lengths");
  }
  std::array<ErrorMetrics, 3> out;
  std::vector<double> e(truth.size()), t(truth.size());
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      e[i] = estimate[i][a];
      t[i] = truth[i][a];
    }
    out[a] = compute_rrmse(e, t, mask);
  }
  return out;
}

double normalized_rmse(std::span<const double> estimate, std::span<const double> truth,
                       double reference, const std::vector<bool>& mask) {
  if (!(reference > 0.0)) fail(ErrorCode::InvalidArgument, "reference must be > 0");
  const Window w = scan(estimate, truth, mask);
  return 100.0 * std::sqrt(w.sse / w.n) / reference;
}

}  // namespace hybridlink
