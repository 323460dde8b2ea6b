#pragma once

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

namespace fusestab {

/// Forward-mode derivative carrier with inline storage for up to 16 inputs.
using AdDerivatives = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;
using AdScalar = Eigen::AutoDiffScalar<AdDerivatives>;

inline double value_of(double x) { return x; }

template <typename D>
double value_of(const Eigen::AutoDiffScalar<D>& x) {
  return x.value();
}

}  // namespace fusestab
