#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "domino/gp.hpp"
#include "domino/series.hpp"

// Multi-task GP with a common mean process, trained by EM on series that
// share one grid. Individual i is modelled as y_i = mu_0 + f_i + eps_i with
// mu_0 ~ GP(m_0, K_theta0), f_i ~ GP(0, K_theta_i), eps_i ~ N(0, sigma_i^2).
// The mean kernel's noise_var is a white component of mu_0 itself.
namespace domino::magma {

using gp::GpPosterior;
using gp::KernelParams;
using gp::Observations;
using series::Dataset;
using series::TimeGrid;
using series::TimeSeries;

struct EmConfig {
  std::size_t max_iterations = 25;
  // Relative: stop once the marginal log-likelihood gains less than
  // tolerance * max(1, |previous value|).
  double tolerance = 1e-5;
  gp::OptimizerConfig m_step{1, 50, 1e-6};
  // When set, every kernel carries a periodic factor initialised here.
  std::optional<double> period;

  void validate() const;
};

struct MagmaParams {
  KernelParams mean_kernel;
  std::vector<KernelParams> individual_kernels;
};

struct EStepResult {
  GpPosterior mean_posterior;
  double log_likelihood = 0.0;  // log p(y_1..y_I | params), exact
};

// Closed-form common-mean posterior. prior_mean defaults to zero.
EStepResult e_step_full(std::span<const TimeSeries> series, const MagmaParams& params,
                        const Eigen::VectorXd& prior_mean = {});
GpPosterior e_step(std::span<const TimeSeries> series, const KernelParams& mean_kernel,
                   const std::vector<KernelParams>& individual_kernels, const Eigen::VectorXd& prior_mean = {});
GpPosterior e_step(const Dataset& dataset, const KernelParams& mean_kernel,
                   const std::vector<KernelParams>& individual_kernels, const Eigen::VectorXd& prior_mean = {});

double marginal_log_likelihood(std::span<const TimeSeries> series, const MagmaParams& params,
                               const Eigen::VectorXd& prior_mean = {});

// Expected complete-data log-likelihood under the mean posterior; the
// quantity each M-step increases.
double expected_log_likelihood(std::span<const TimeSeries> series, const GpPosterior& mean_post,
                               const MagmaParams& params, const Eigen::VectorXd& prior_mean = {});

// Warm-started from `current`; never lowers expected_log_likelihood.
MagmaParams m_step(std::span<const TimeSeries> series, const GpPosterior& mean_post, const MagmaParams& current,
                   const gp::OptimizerConfig& opt = {1, 50, 1e-6}, const Eigen::VectorXd& prior_mean = {});
MagmaParams m_step(const Dataset& dataset, const GpPosterior& mean_post, const MagmaParams& current,
                   const gp::OptimizerConfig& opt = {1, 50, 1e-6}, const Eigen::VectorXd& prior_mean = {});

struct MagmaModel {
  double offset = 0.0;  // global mean removed before training
  GpPosterior mean_posterior;  // raw (uncentred) units
  KernelParams mean_kernel;
  std::vector<KernelParams> individual_kernels;
  std::vector<double> em_trace;
  std::size_t iterations = 0;  // accepted M-steps; em_trace has one more entry
  bool converged = false;

  const TimeGrid& grid() const noexcept { return mean_posterior.grid; }
};

// Initial hyperparameters used by fit_magma on (centred) data.
MagmaParams initial_params(const Dataset& centred, const EmConfig& config);

// EM from initial_params. Stops once the gain falls below the relative
// tolerance (converged) or at max_iterations. An M-step whose E-step
// likelihood comes out lower, which only rounding can cause, is discarded
// and ends the run unconverged.
MagmaModel fit_magma(const Dataset& dataset, const EmConfig& config = {});

// Hyperparameters for an unseen individual: the log-space average of the
// training individuals, refined on `observed` when it has >= 3 points.
KernelParams new_individual_kernel(const MagmaModel& model, const Observations& observed,
                                   const gp::OptimizerConfig& opt = {3, 100, 1e-6});

// Forecast for a new individual conditioned on `observed`. Prior mean is the
// common-mean posterior mean; prior covariance K_new + common-mean covariance.
// Observed and query points must lie on the model grid.
GpPosterior predict_magma(const MagmaModel& model, const Observations& observed, const TimeGrid& query,
                          const gp::OptimizerConfig& opt = {3, 100, 1e-6});
GpPosterior predict_magma(const MagmaModel& model, const TimeSeries& observed, const TimeGrid& query,
                          const gp::OptimizerConfig& opt = {3, 100, 1e-6});

// Posterior of training individual i's latent curve on the model grid.
GpPosterior individual_posterior(const MagmaModel& model, const TimeSeries& member, std::size_t i);

// One latent posterior draw per training individual, seeded per individual.
std::vector<Eigen::VectorXd> draw_individual_paths(const MagmaModel& model, const Dataset& train, std::uint64_t seed);

void save_model(std::ostream& out, const MagmaModel& model);
MagmaModel load_model(std::istream& in);

}  // namespace domino::magma
