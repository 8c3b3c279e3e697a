// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference oracle, kept independent of the backprop code.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sigverify::testing {

inline double central_difference(double& x, const std::function<double()>& f,
                                 double h = 1e-6) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Relative error with a 1e-4 floor on the denominator, so components whose
/// true gradient is zero are judged by absolute error.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / denom;
}

struct GradReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Compares analytic gradients against central differences of `f` for each
/// value in `values`.
inline GradReport check_gradients(std::span<double> values,
                                  std::span<const double> analytic,
                                  const std::function<double()>& f,
                                  const std::string& label, double h = 1e-6) {
  GradReport r;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double numeric = central_difference(values[i], f, h);
    const double err = relative_error(analytic[i], numeric);
    ++r.checked;
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst = label + "[" + std::to_string(i) + "] analytic=" +
                std::to_string(analytic[i]) + " numeric=" + std::to_string(numeric);
    }
  }
  return r;
}

}  // namespace sigverify::testing
