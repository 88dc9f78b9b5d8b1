#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>

namespace rulgp {

/// Evaluates an objective and its gradient at theta. Returns false when
/// theta is infeasible (for example, a failed factorization).
using SmoothObjective = std::function<bool(const Eigen::VectorXd& theta, double& value, Eigen::VectorXd& gradient)>;

struct AscentResult {
  Eigen::VectorXd theta;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Box-constrained gradient ascent along limited-memory BFGS directions with
/// Armijo backtracking. Stops after `max_iterations` accepted steps, when an
/// accepted step changes the objective by less than `tolerance`, or when no
/// ascent step can be found. Returns value -inf if the start is infeasible.
AscentResult maximize_in_box(const SmoothObjective& objective, Eigen::VectorXd start, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, int max_iterations, double tolerance);

}  // namespace rulgp
