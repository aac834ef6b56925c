// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient verification. Intended to run in
// 64-bit precision on tiny shapes.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "jgseg/autodiff.hpp"

namespace jgseg {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t checked = 0;
};

// f rebuilds the scalar loss from the current leaf values on every call.
// Relative error uses the symmetric measure |a-n| / max(1, |a| + |n|).
inline GradCheckResult gradcheck(
    const std::function<ad::Var<double>()>& f, const std::vector<ad::Var<double>>& leaves,
    double step = 1e-5) {
  GradCheckResult res;
  ad::Var<double> loss = f();
  std::vector<ad::Var<double>> analytic = ad::grad(loss, leaves);
  for (size_t li = 0; li < leaves.size(); ++li) {
    ad::Var<double> leaf = leaves[li];
    for (std::int64_t i = 0; i < leaf.numel(); ++i) {
      const double orig = leaf.value()[i];
      leaf.mutable_value()[i] = orig + step;
      const double fp = f().value().item();
      leaf.mutable_value()[i] = orig - step;
      const double fm = f().value().item();
      leaf.mutable_value()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[li].defined() ? analytic[li].value()[i] : 0.0;
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max(1.0, std::abs(a) + std::abs(numeric));
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace jgseg
