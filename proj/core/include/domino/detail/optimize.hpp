#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Core>

namespace domino::detail {

// Returns the objective at x and, when grad != nullptr, writes its gradient.
// May throw NumericalFailure; away from the starting point that is treated
// as a rejected step.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

struct MaximizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

// Projected BFGS ascent with Armijo backtracking. Stops when an accepted
// step improves the objective by less than `tolerance`, or after
// `max_iterations` steps.
MaximizeResult maximize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const Box& box,
                             std::size_t max_iterations, double tolerance);

}  // namespace domino::detail
