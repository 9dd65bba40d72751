#pragma once

#include <cmath>

namespace empdyn {

enum class KernelFamily { Epanechnikov, GaussianTruncated };

// Nonnegative compactly supported density used as the smoothing weight.
// The 2D kernel is the tensor product of two 1D evaluations.
struct KernelSpec {
  KernelFamily family = KernelFamily::Epanechnikov;

  // half-width of the support in standardized units
  double support() const { return family == KernelFamily::Epanechnikov ? 1.0 : 3.0; }

  double operator()(double u) const {
    if (family == KernelFamily::Epanechnikov) {
      const double a = std::abs(u);
      return a < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    }
    if (std::abs(u) >= 3.0) return 0.0;
    // standard normal density renormalized to integrate to one on [-3, 3]
    static const double norm =
        std::sqrt(2.0 * M_PI) * std::erf(3.0 / std::sqrt(2.0));
    return std::exp(-0.5 * u * u) / norm;
  }
};

}  // namespace empdyn
