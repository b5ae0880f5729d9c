#include "domino/detail/optimize.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "domino/errors.hpp"

namespace domino::detail {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMaxStep = 2.0;  // largest move per iteration, in log units
constexpr int kMaxBacktracks = 30;

// Zero the components that would push an active bound further outward.
Eigen::VectorXd project_direction(const Eigen::VectorXd& d, const Eigen::VectorXd& x, const Box& box) {
  Eigen::VectorXd out = d;
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if ((x[j] <= box.lower[j] && d[j] < 0.0) || (x[j] >= box.upper[j] && d[j] > 0.0)) out[j] = 0.0;
  }
  return out;
}

}  // namespace

MaximizeResult maximize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const Box& box,
                             std::size_t max_iterations, double tolerance) {
  const Eigen::Index dim = x0.size();
  MaximizeResult res;
  res.x = box.clamp(x0);
  Eigen::VectorXd grad(dim);
  res.value = f(res.x, &grad);
  res.evaluations = 1;
  if (!std::isfinite(res.value)) return res;

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim);  // inverse Hessian of -f
  for (; res.iterations < max_iterations; ++res.iterations) {
    Eigen::VectorXd d = project_direction(h * grad, res.x, box);
    if (d.dot(grad) <= 0.0) {
      h.setIdentity();
      d = project_direction(grad, res.x, box);
    }
    const double dnorm = d.lpNorm<Eigen::Infinity>();
    if (!(dnorm > 1e-12)) break;
    double alpha = dnorm > kMaxStep ? kMaxStep / dnorm : 1.0;

    bool accepted = false;
    Eigen::VectorXd x_new, g_new(dim);
    double v_new = -std::numeric_limits<double>::infinity();
    for (int bt = 0; bt < kMaxBacktracks; ++bt, alpha *= 0.5) {
      x_new = box.clamp(res.x + alpha * d);
      const Eigen::VectorXd step = x_new - res.x;
      if (step.lpNorm<Eigen::Infinity>() < 1e-14) break;
      try {
        v_new = f(x_new, &g_new);
      } catch (const NumericalFailure&) {
        v_new = -std::numeric_limits<double>::infinity();
      }
      ++res.evaluations;
      if (std::isfinite(v_new) && v_new >= res.value + kArmijo * grad.dot(step)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = grad - g_new;  // gradient change of -f
    const double improvement = v_new - res.value;
    res.x = x_new;
    res.value = v_new;
    grad = g_new;
    if (improvement < tolerance) {
      ++res.iterations;
      break;
    }
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(dim, dim);
      h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) + rho * s * s.transpose();
    }
  }
  return res;
}

}  // namespace domino::detail
