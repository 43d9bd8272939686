#pragma once

#include <cmath>

namespace vmspec {

// Decay envelope w(e) = c (1+|e|)^(-alpha) bounding |mu_e| + |mu_p|.
struct WeightSpec {
  double c = 1.0;
  double alpha = 12.0;

  double operator()(double e) const { return c * std::pow(1.0 + std::abs(e), -alpha); }
};

}  // namespace vmspec
