#pragma once

#include <vector>

namespace hybridlink {

struct QuadratureRule {
  std::vector<double> nodes;    // in [0, 1]
  std::vector<double> weights;  // sum to 1
};

/// Gauss-Legendre rule with `order` nodes mapped to the unit interval.
const QuadratureRule& gauss_legendre(int order);

}  // namespace hybridlink
