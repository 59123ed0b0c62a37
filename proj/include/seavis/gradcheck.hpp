#pragma once

// Finite-difference gradient oracle. Central differences at h = 1e-5 agree
// with analytic derivatives of smooth functions to ~1e-8 relative error in
// 64-bit arithmetic, which is the certification margin used by the tests.

#include <algorithm>
#include <cmath>
#include <functional>

#include "seavis/errors.hpp"
#include "seavis/numkernel.hpp"

namespace seavis::gradcheck {

struct ScalarField {
  std::function<double(const DenseArray&)> eval;
  std::size_t dimension = 0;
};

inline DenseArray central_diff_grad(const ScalarField& f, const DenseArray& x,
                                    double h = 1e-5) {
  if (h <= 0.0) throw ConfigError("central_diff_grad: h must be positive");
  DenseArray grad(x.shape);
  DenseArray probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data[i];
    probe.data[i] = xi + h;
    const double fp = f.eval(probe);
    probe.data[i] = xi - h;
    const double fm = f.eval(probe);
    probe.data[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("central_diff_grad: non-finite probe evaluation");
    grad.data[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// ||g1 - g2|| / max(||g1||, ||g2||, 1e-12)
inline double rel_error(const DenseArray& g1, const DenseArray& g2) {
  if (!g1.same_shape(g2)) throw DimensionError("rel_error: shape mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const double d = g1.data[i] - g2.data[i];
    diff += d * d;
  }
  const double denom =
      std::max({l2_norm(g1), l2_norm(g2), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace seavis::gradcheck
