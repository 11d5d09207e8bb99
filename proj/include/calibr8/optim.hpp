#pragma once

#include <functional>

#include "calibr8/core.hpp"

namespace calibr8::optim {

struct Result {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead on the box [lo, hi]; trial points are clamped into the box.
/// Stops after `max_evals` evaluations or when the simplex value spread drops
/// below `ftol`.
Result nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0, const Vector& step,
                   const Vector& lo, const Vector& hi, int max_evals, double ftol = 1e-10);

/// Objective that writes its gradient into `grad` when non-null.
using GradObjective = std::function<double(const Vector& x, Vector* grad)>;

/// Projected quasi-Newton (BFGS) minimization on the box [lo, hi].
Result bfgs_box(const GradObjective& f, const Vector& x0, const Vector& lo, const Vector& hi, int max_iter = 200,
                double gtol = 1e-6);

}  // namespace calibr8::optim
