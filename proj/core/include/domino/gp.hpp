#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "domino/series.hpp"

namespace domino::gp {

using series::TimeGrid;
using series::TimeSeries;

// Squared-exponential kernel, optionally multiplied by a periodic factor
// sharing the same lengthscale:
//   k(d) = variance * exp(-d^2 / (2 l^2)) * exp(-2 sin^2(pi d / period) / l^2)
// noise_var is the variance of i.i.d. observation noise; it is added to the
// diagonal of training covariances, never by kernel_matrix().
struct KernelParams {
  double variance = 1.0;
  double lengthscale = 1.0;
  std::optional<double> period;
  double noise_var = 0.0;

  void validate() const;
  bool has_period() const noexcept { return period.has_value(); }
  // Number of free parameters in log space (3 or 4).
  Eigen::Index dimension() const noexcept { return has_period() ? 4 : 3; }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

// Log-space packing used by the optimizer and by the gradient:
// [log variance, log lengthscale, (log period), log noise_var].
Eigen::VectorXd to_log_space(const KernelParams& p);
KernelParams from_log_space(const Eigen::VectorXd& x, bool has_period);

Eigen::MatrixXd kernel_matrix(const KernelParams& params, const Eigen::VectorXd& a,
                              const Eigen::VectorXd& b);

// Relative jitter levels, each scaled by the mean diagonal of the matrix.
inline constexpr std::array<double, 4> kJitterLadder{1e-10, 1e-8, 1e-6, 1e-4};

struct SpdFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute amount added to the diagonal

  double log_det() const;
  Eigen::MatrixXd inverse() const;
};

// Cholesky, unjittered unless some pivot falls to rounding level
// (n * eps * mean diagonal), else with the jitter escalation ladder. Throws NumericalFailure naming
// `what` when no level factorizes.
SpdFactor factorize_spd(const Eigen::MatrixXd& a, std::string_view what = "covariance");

// Observation set that may be empty (unlike a TimeSeries).
struct Observations {
  Eigen::VectorXd times;
  Eigen::VectorXd values;

  static Observations of(const TimeSeries& ts) { return {ts.grid.points(), ts.values}; }
  Eigen::Index size() const noexcept { return times.size(); }
};

// Gaussian fitting objective over kernel hyperparameters:
//   log N(residual | 0, Psi) - 1/2 tr(Psi^-1 correction),
//   Psi = K(times, times) + noise_var I + extra_cov.
// Empty matrices mean "absent". With both absent this is the ordinary log
// marginal likelihood; `correction` carries the posterior covariance term of
// an EM expected log-likelihood, `extra_cov` a known additive prior covariance.
struct FitProblem {
  Eigen::VectorXd times;
  Eigen::VectorXd residual;
  Eigen::MatrixXd extra_cov;
  Eigen::MatrixXd correction;
  // Lower limit on the variance scale the optimizer box is derived from.
  double scale_floor = 0.0;
};

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d log-params; empty unless requested
};

ObjectiveValue evaluate_objective(const FitProblem& problem, const KernelParams& params,
                                  bool with_gradient);

double log_marginal_likelihood(const KernelParams& params, const Eigen::VectorXd& mean_fn,
                               const TimeSeries& ts);
Eigen::VectorXd log_marginal_likelihood_gradient(const KernelParams& params,
                                                 const Eigen::VectorXd& mean_fn,
                                                 const TimeSeries& ts);

struct OptimizerConfig {
  std::size_t restarts = 5;
  std::size_t max_iterations = 200;
  double tolerance = 1e-6;
};

// Multi-start BFGS ascent in log space within data-derived bounds. Never
// returns parameters scoring below `init`.
KernelParams fit_problem(const FitProblem& problem, const KernelParams& init,
                         const OptimizerConfig& opt = {});

KernelParams fit_hyperparams(const TimeSeries& ts, const Eigen::VectorXd& mean_fn,
                             const KernelParams& init, const OptimizerConfig& opt = {});

struct GpPosterior {
  TimeGrid grid;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::VectorXd stddev() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

// Dense Gaussian conditioning on noisy training observations.
// prior_train / prior_query are prior means; k_tt excludes noise.
GpPosterior condition(const TimeGrid& grid, const Eigen::VectorXd& prior_train,
                      const Eigen::VectorXd& prior_query, const Eigen::MatrixXd& k_tt,
                      const Eigen::MatrixXd& k_tq, const Eigen::MatrixXd& k_qq,
                      double noise_var, const Eigen::VectorXd& y_train);

// prior_mean stacks the train points first, then the query grid.
GpPosterior posterior(const KernelParams& params, const Eigen::VectorXd& prior_mean,
                      const Observations& train, const TimeGrid& query);
GpPosterior posterior(const KernelParams& params, const Eigen::VectorXd& prior_mean,
                      const TimeSeries& train, const TimeGrid& query);

// mean + L z with L L^T = cov + jitter I and z ~ N(0, I).
std::vector<Eigen::VectorXd> sample_paths(const GpPosterior& post, std::size_t count,
                                          std::uint64_t seed);

}  // namespace domino::gp
