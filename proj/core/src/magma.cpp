#include "domino/magma.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "domino/detail/text.hpp"
#include "domino/detail/fpenv.hpp"
#include "domino/errors.hpp"
#include "domino/random.hpp"

namespace domino::magma {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

const TimeGrid& shared_grid(std::span<const TimeSeries> series) {
  if (series.empty()) throw InvalidArgument("magma: no series");
  for (const auto& s : series)
    if (!(s.grid == series.front().grid)) throw InvalidArgument("magma: series grids are not aligned");
  return series.front().grid;
}

Eigen::VectorXd prior_or_zero(const Eigen::VectorXd& prior_mean, Eigen::Index n) {
  if (prior_mean.size() == 0) return Eigen::VectorXd::Zero(n);
  if (prior_mean.size() != n) throw InvalidArgument("magma: prior mean length mismatch");
  return prior_mean;
}

Eigen::MatrixXd covariance(const KernelParams& k, const Eigen::VectorXd& t) {
  Eigen::MatrixXd m = gp::kernel_matrix(k, t, t);
  m.diagonal().array() += k.noise_var;
  return m;
}

void check_params(std::span<const TimeSeries> series, const MagmaParams& params) {
  if (params.individual_kernels.size() != series.size())
    throw InvalidArgument("magma: need one individual kernel per series");
}

}  // namespace

void EmConfig::validate() const {
  if (!(tolerance >= 0.0)) throw InvalidArgument("em tolerance must be >= 0");
  if (period && !(*period > 0.0)) throw InvalidArgument("em period must be > 0");
}

EStepResult e_step_full(std::span<const TimeSeries> series, const MagmaParams& params,
                        const Eigen::VectorXd& prior_mean) {
  const detail::ScopedFlushDenormals ftz;
  check_params(series, params);
  const TimeGrid& grid = shared_grid(series);
  const Eigen::VectorXd t = grid.points();
  const Eigen::Index n = t.size();
  const Eigen::VectorXd m0 = prior_or_zero(prior_mean, n);

  // Precision sum Lambda = sum Psi_i^-1 and the precision-weighted average
  // ybar = Lambda^-1 sum Psi_i^-1 r_i of the residuals r_i = y_i - m0.
  std::vector<gp::SpdFactor> psi;
  psi.reserve(series.size());
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  double log_det_psi = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    psi.push_back(gp::factorize_spd(covariance(params.individual_kernels[i], t), "individual covariance"));
    lambda += psi.back().inverse();
    b += psi.back().llt.solve(series[i].values - m0);
    log_det_psi += psi.back().log_det();
  }
  const gp::SpdFactor fl = gp::factorize_spd(lambda, "precision sum");
  const Eigen::MatrixXd s = fl.inverse();
  const Eigen::VectorXd ybar = fl.llt.solve(b);
  double scatter = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Eigen::VectorXd d = series[i].values - m0 - ybar;
    scatter += d.dot(psi[i].llt.solve(d));
  }

  // The common mean is a GP regression of ybar with noise covariance S =
  // Lambda^-1:  C = K0 - K0 A^-1 K0 = S - S A^-1 S,  A = K0 + S.  Subtracting
  // from the smaller of K0 and S keeps cancellation at that scale.
  const Eigen::MatrixXd k0 = covariance(params.mean_kernel, t);
  const gp::SpdFactor fa = gp::factorize_spd(k0 + s, "mean posterior system");
  const Eigen::VectorXd a_ybar = fa.llt.solve(ybar);
  const bool from_s = s.trace() <= k0.trace();
  const Eigen::MatrixXd& base = from_s ? s : k0;
  const Eigen::MatrixXd v = fa.llt.matrixL().solve(base);
  Eigen::MatrixXd cov = base;
  cov.noalias() -= v.transpose() * v;
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::VectorXd mean = from_s ? Eigen::VectorXd(m0 + ybar - s * a_ybar) : Eigen::VectorXd(m0 + k0 * a_ybar);

  // log N(y_all | 1 (x) m0, blockdiag(Psi_i) + 11' (x) K0): the quadratic
  // form splits into the scatter about ybar plus ybar' A^-1 ybar, and the
  // determinant into prod det(Psi_i) * det(Lambda) * det(A).
  const double total = static_cast<double>(series.size()) * static_cast<double>(n);
  const double ll =
      -0.5 * (scatter + ybar.dot(a_ybar) + log_det_psi + fl.log_det() + fa.log_det() + total * kLog2Pi);

  return {GpPosterior{grid, std::move(mean), std::move(cov)}, ll};
}

GpPosterior e_step(std::span<const TimeSeries> series, const KernelParams& mean_kernel,
                   const std::vector<KernelParams>& individual_kernels, const Eigen::VectorXd& prior_mean) {
  return e_step_full(series, MagmaParams{mean_kernel, individual_kernels}, prior_mean).mean_posterior;
}

GpPosterior e_step(const Dataset& dataset, const KernelParams& mean_kernel,
                   const std::vector<KernelParams>& individual_kernels, const Eigen::VectorXd& prior_mean) {
  return e_step(std::span<const TimeSeries>(dataset.series()), mean_kernel, individual_kernels, prior_mean);
}

double marginal_log_likelihood(std::span<const TimeSeries> series, const MagmaParams& params,
                               const Eigen::VectorXd& prior_mean) {
  return e_step_full(series, params, prior_mean).log_likelihood;
}

namespace {

gp::FitProblem individual_problem(const TimeSeries& s, const GpPosterior& mean_post, double floor = 0.0) {
  return {s.grid.points(), s.values - mean_post.mean, {}, mean_post.cov, floor};
}

gp::FitProblem mean_problem(const GpPosterior& mean_post, const Eigen::VectorXd& m0, double floor = 0.0) {
  return {mean_post.grid.points(), mean_post.mean - m0, {}, mean_post.cov, floor};
}

// Pooled sample variance of every observation, 1 when degenerate.
double pooled_variance(std::span<const TimeSeries> series) {
  double sum = 0.0, sum_sq = 0.0, count = 0.0;
  for (const auto& s : series) {
    sum += s.values.sum();
    sum_sq += s.values.squaredNorm();
    count += static_cast<double>(s.size());
  }
  if (count < 2.0) return 1.0;
  const double mean = sum / count;
  const double var = (sum_sq - count * mean * mean) / (count - 1.0);
  return var > 0.0 ? var : 1.0;
}

}  // namespace

double expected_log_likelihood(std::span<const TimeSeries> series, const GpPosterior& mean_post,
                               const MagmaParams& params, const Eigen::VectorXd& prior_mean) {
  check_params(series, params);
  const TimeGrid& grid = shared_grid(series);
  if (!(mean_post.grid == grid)) throw InvalidArgument("magma: mean posterior is not on the shared grid");
  const Eigen::VectorXd m0 = prior_or_zero(prior_mean, static_cast<Eigen::Index>(grid.size()));
  double q = gp::evaluate_objective(mean_problem(mean_post, m0), params.mean_kernel, false).value;
  for (std::size_t i = 0; i < series.size(); ++i)
    q += gp::evaluate_objective(individual_problem(series[i], mean_post), params.individual_kernels[i], false).value;
  return q;
}

MagmaParams m_step(std::span<const TimeSeries> series, const GpPosterior& mean_post, const MagmaParams& current,
                   const gp::OptimizerConfig& opt, const Eigen::VectorXd& prior_mean) {
  const detail::ScopedFlushDenormals ftz;
  check_params(series, current);
  const TimeGrid& grid = shared_grid(series);
  if (!(mean_post.grid == grid)) throw InvalidArgument("magma: mean posterior is not on the shared grid");
  const Eigen::VectorXd m0 = prior_or_zero(prior_mean, static_cast<Eigen::Index>(grid.size()));

  // The expected log-likelihood separates over theta_0 and each theta_i.
  MagmaParams next;
  // Residuals shrink as the mean fits; the box stays anchored to the data.
  const double floor = pooled_variance(series);
  next.mean_kernel = gp::fit_problem(mean_problem(mean_post, m0, floor), current.mean_kernel, opt);
  next.individual_kernels.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i)
    next.individual_kernels.push_back(
        gp::fit_problem(individual_problem(series[i], mean_post, floor), current.individual_kernels[i], opt));
  return next;
}

MagmaParams m_step(const Dataset& dataset, const GpPosterior& mean_post, const MagmaParams& current,
                   const gp::OptimizerConfig& opt, const Eigen::VectorXd& prior_mean) {
  return m_step(std::span<const TimeSeries>(dataset.series()), mean_post, current, opt, prior_mean);
}

MagmaParams initial_params(const Dataset& centred, const EmConfig& config) {
  const double var = pooled_variance(centred.series());

  KernelParams k;
  k.variance = var;
  k.lengthscale = centred.grid().span() / 10.0;
  k.noise_var = 0.05 * var;
  k.period = config.period;
  return {k, std::vector<KernelParams>(centred.count(), k)};
}

MagmaModel fit_magma(const Dataset& dataset, const EmConfig& config) {
  const detail::ScopedFlushDenormals ftz;
  config.validate();
  double offset = 0.0, count = 0.0;
  for (const auto& s : dataset.series()) {
    offset += s.values.sum();
    count += static_cast<double>(s.size());
  }
  offset /= count;

  std::vector<TimeSeries> centred;
  centred.reserve(dataset.count());
  for (const auto& s : dataset.series())
    centred.emplace_back(s.id, s.grid, (s.values.array() - offset).matrix());
  const Dataset data(std::move(centred));
  const std::span<const TimeSeries> view(data.series());

  MagmaParams params = initial_params(data, config);
  auto run_e_step = [&](std::size_t iteration) {
    try {
      return e_step_full(view, params);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("EM iteration " + std::to_string(iteration) + " (E-step): " + e.what(),
                             e.attempted_jitter());
    }
  };

  EStepResult e = run_e_step(0);
  std::vector<double> trace{e.log_likelihood};
  std::size_t it = 0;
  bool converged = false;
  while (it < config.max_iterations) {
    ++it;
    MagmaParams last = params;
    try {
      params = m_step(view, e.mean_posterior, params, config.m_step);
    } catch (const NumericalFailure& err) {
      throw NumericalFailure("EM iteration " + std::to_string(it) + " (M-step): " + err.what(),
                             err.attempted_jitter());
    }
    EStepResult next = run_e_step(it);
    const double prev = trace.back();
    // Exact EM cannot lower the likelihood; a drop is rounding in a
    // near-singular problem, so keep the previous state and stop there.
    if (next.log_likelihood < prev) {
      params = std::move(last);
      --it;
      break;
    }
    e = std::move(next);
    trace.push_back(e.log_likelihood);
    if (e.log_likelihood - prev < config.tolerance * std::max(1.0, std::abs(prev))) {
      converged = true;
      break;
    }
  }

  GpPosterior mean_post = std::move(e.mean_posterior);
  mean_post.mean.array() += offset;
  return MagmaModel{offset, std::move(mean_post), params.mean_kernel, std::move(params.individual_kernels),
                    std::move(trace), it, converged};
}

namespace {

std::vector<Eigen::Index> grid_indices(const TimeGrid& grid, const Eigen::VectorXd& times, const char* what) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(times.size()));
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    const auto k = grid.index_of(times[j]);
    if (k < 0)
      throw InvalidArgument(std::string("predict_magma: ") + what + " point " + detail::format_double(times[j]) +
                            " is not on the model grid");
    idx.push_back(static_cast<Eigen::Index>(k));
  }
  return idx;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows,
                          const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(rows[r], cols[c]);
  return out;
}

Eigen::VectorXd subvector(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Eigen::Index>(j)] = v[idx[j]];
  return out;
}

}  // namespace

KernelParams new_individual_kernel(const MagmaModel& model, const Observations& observed,
                                   const gp::OptimizerConfig& opt) {
  if (model.individual_kernels.empty()) throw InvalidArgument("magma model has no individual kernels");
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(model.individual_kernels.front().dimension());
  for (const auto& k : model.individual_kernels) avg += gp::to_log_space(k);
  avg /= static_cast<double>(model.individual_kernels.size());
  KernelParams init = gp::from_log_space(avg, model.individual_kernels.front().has_period());
  if (observed.size() < 3) return init;

  const auto idx = grid_indices(model.grid(), observed.times, "observed");
  gp::FitProblem problem{observed.times, observed.values - subvector(model.mean_posterior.mean, idx),
                         submatrix(model.mean_posterior.cov, idx, idx), {}};
  return gp::fit_problem(problem, init, opt);
}

GpPosterior predict_magma(const MagmaModel& model, const Observations& observed, const TimeGrid& query,
                          const gp::OptimizerConfig& opt) {
  const detail::ScopedFlushDenormals ftz;
  if (observed.values.size() != observed.size()) throw InvalidArgument("predict_magma: observed size mismatch");
  const auto obs_idx = grid_indices(model.grid(), observed.times, "observed");
  const Eigen::VectorXd tq = query.points();
  const auto q_idx = grid_indices(model.grid(), tq, "query");

  const KernelParams k_new = new_individual_kernel(model, observed, opt);
  const Eigen::MatrixXd& c = model.mean_posterior.cov;
  const Eigen::VectorXd& mu = model.mean_posterior.mean;

  Eigen::MatrixXd k_tt = gp::kernel_matrix(k_new, observed.times, observed.times) + submatrix(c, obs_idx, obs_idx);
  Eigen::MatrixXd k_tq = gp::kernel_matrix(k_new, observed.times, tq) + submatrix(c, obs_idx, q_idx);
  Eigen::MatrixXd k_qq = gp::kernel_matrix(k_new, tq, tq) + submatrix(c, q_idx, q_idx);
  return gp::condition(query, subvector(mu, obs_idx), subvector(mu, q_idx), k_tt, k_tq, k_qq, k_new.noise_var,
                       observed.values);
}

GpPosterior predict_magma(const MagmaModel& model, const TimeSeries& observed, const TimeGrid& query,
                          const gp::OptimizerConfig& opt) {
  return predict_magma(model, Observations::of(observed), query, opt);
}

GpPosterior individual_posterior(const MagmaModel& model, const TimeSeries& member, std::size_t i) {
  if (i >= model.individual_kernels.size()) throw InvalidArgument("individual index out of range");
  if (!(member.grid == model.grid())) throw InvalidArgument("individual_posterior: series is not on the model grid");
  const KernelParams& k = model.individual_kernels[i];
  const Eigen::VectorXd t = model.grid().points();
  const Eigen::MatrixXd prior = gp::kernel_matrix(k, t, t) + model.mean_posterior.cov;
  const Eigen::VectorXd& mu = model.mean_posterior.mean;
  return gp::condition(model.grid(), mu, mu, prior, prior, prior, k.noise_var, member.values);
}

std::vector<Eigen::VectorXd> draw_individual_paths(const MagmaModel& model, const Dataset& train, std::uint64_t seed) {
  if (train.count() != model.individual_kernels.size())
    throw InvalidArgument("draw_individual_paths: dataset does not match the model's individuals");
  std::vector<Eigen::VectorXd> paths;
  paths.reserve(train.count());
  for (std::size_t i = 0; i < train.count(); ++i) {
    const GpPosterior post = individual_posterior(model, train[i], i);
    paths.push_back(gp::sample_paths(post, 1, derive_seed(seed, {i})).front());
  }
  return paths;
}

namespace {

void write_kernel(std::ostream& out, const KernelParams& k) {
  out << detail::format_double(k.variance) << ' ' << detail::format_double(k.lengthscale) << ' '
      << (k.period ? detail::format_double(*k.period) : std::string("none")) << ' '
      << detail::format_double(k.noise_var) << '\n';
}

KernelParams read_kernel(detail::TokenReader& in) {
  KernelParams k;
  k.variance = in.number();
  k.lengthscale = in.number();
  const std::string period = in.next();
  if (period != "none") {
    const auto p = detail::parse_double(period);
    if (!p) throw ParseError("bad kernel period '" + period + "'", in.line());
    k.period = *p;
  }
  k.noise_var = in.number();
  try {
    k.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), in.line());
  }
  return k;
}

}  // namespace

void save_model(std::ostream& out, const MagmaModel& model) {
  const TimeGrid& g = model.grid();
  const auto n = static_cast<Eigen::Index>(g.size());
  out << "domino-magma-model 1\n";
  out << "offset " << detail::format_double(model.offset) << '\n';
  out << "grid " << detail::format_double(g.start()) << ' ' << detail::format_double(g.step()) << ' ' << g.size()
      << '\n';
  out << "mean_kernel ";
  write_kernel(out, model.mean_kernel);
  out << "individuals " << model.individual_kernels.size() << '\n';
  for (const auto& k : model.individual_kernels) {
    out << "kernel ";
    write_kernel(out, k);
  }
  out << "iterations " << model.iterations << " converged " << (model.converged ? 1 : 0) << '\n';
  out << "em_trace " << model.em_trace.size();
  for (double v : model.em_trace) out << ' ' << detail::format_double(v);
  out << "\nmean";
  for (Eigen::Index j = 0; j < n; ++j) out << ' ' << detail::format_double(model.mean_posterior.mean[j]);
  out << "\ncov\n";
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (c) out << ' ';
      out << detail::format_double(model.mean_posterior.cov(r, c));
    }
    out << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("failed writing magma model");
}

MagmaModel load_model(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("domino-magma-model");
  if (in.integer() != 1) throw ParseError("unsupported magma model version", in.line());
  in.expect("offset");
  const double offset = in.number();
  in.expect("grid");
  const double start = in.number();
  const double step = in.number();
  const std::size_t n = in.count();
  TimeGrid grid = [&] {
    try {
      return TimeGrid::make(start, step, n);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), in.line());
    }
  }();
  in.expect("mean_kernel");
  const KernelParams mean_kernel = read_kernel(in);
  in.expect("individuals");
  const std::size_t count = in.count();
  std::vector<KernelParams> kernels;
  for (std::size_t i = 0; i < count; ++i) {
    in.expect("kernel");
    kernels.push_back(read_kernel(in));
  }
  in.expect("iterations");
  const std::size_t iterations = in.count();
  in.expect("converged");
  const bool converged = in.integer() != 0;
  in.expect("em_trace");
  std::vector<double> trace(in.count());
  for (double& v : trace) v = in.number();
  const auto ni = static_cast<Eigen::Index>(n);
  in.expect("mean");
  Eigen::VectorXd mean(ni);
  for (Eigen::Index j = 0; j < ni; ++j) mean[j] = in.number();
  in.expect("cov");
  Eigen::MatrixXd cov(ni, ni);
  for (Eigen::Index r = 0; r < ni; ++r)
    for (Eigen::Index c = 0; c < ni; ++c) cov(r, c) = in.number();
  in.expect("end");
  return MagmaModel{offset, GpPosterior{grid, std::move(mean), std::move(cov)}, mean_kernel, std::move(kernels),
                    std::move(trace), iterations, converged};
}

}  // namespace domino::magma
