#include "domino/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "domino/detail/fpenv.hpp"
#include "domino/detail/optimize.hpp"
#include "domino/errors.hpp"
#include "domino/random.hpp"

namespace domino::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

void KernelParams::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance)) throw InvalidArgument("kernel variance must be > 0");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw InvalidArgument("kernel lengthscale must be > 0");
  if (period && (!(*period > 0.0) || !std::isfinite(*period)))
    throw InvalidArgument("kernel period must be > 0");
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) throw InvalidArgument("noise_var must be >= 0");
}

Eigen::VectorXd to_log_space(const KernelParams& p) {
  Eigen::VectorXd x(p.dimension());
  Eigen::Index j = 0;
  x[j++] = std::log(p.variance);
  x[j++] = std::log(p.lengthscale);
  if (p.period) x[j++] = std::log(*p.period);
  // noise_var == 0 maps to -inf; the optimizer clamps it into its box.
  x[j] = std::log(p.noise_var);
  return x;
}

KernelParams from_log_space(const Eigen::VectorXd& x, bool has_period) {
  KernelParams p;
  Eigen::Index j = 0;
  p.variance = std::exp(x[j++]);
  p.lengthscale = std::exp(x[j++]);
  if (has_period) p.period = std::exp(x[j++]);
  p.noise_var = std::exp(x[j]);
  return p;
}

namespace {

// Step of an evenly spaced vector, or nullopt.
std::optional<double> regular_step(const Eigen::VectorXd& v) {
  if (v.size() < 2) return std::nullopt;
  const double h = (v[v.size() - 1] - v[0]) / static_cast<double>(v.size() - 1);
  if (!(h > 0.0)) return std::nullopt;
  const double tol = 1e-10 * h;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i] - (v[0] + static_cast<double>(i) * h)) > tol) return std::nullopt;
  return h;
}

double kernel_value(const KernelParams& params, double inv_l2, double d) {
  double e = -0.5 * d * d * inv_l2;
  if (params.period) {
    const double s = std::sin(std::numbers::pi * d / *params.period);
    e -= 2.0 * s * s * inv_l2;
  }
  return params.variance * std::exp(e);
}

}  // namespace

Eigen::MatrixXd kernel_matrix(const KernelParams& params, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  params.validate();
  const double inv_l2 = 1.0 / (params.lengthscale * params.lengthscale);
  const Eigen::Index na = a.size(), nb = b.size();
  Eigen::MatrixXd k(na, nb);

  // Two grids with a common step: entries only depend on j - c.
  const auto ha = regular_step(a), hb = regular_step(b);
  if (ha && hb && std::abs(*ha - *hb) <= 1e-10 * *ha) {
    const double offset = a[0] - b[0];
    Eigen::VectorXd lag(na + nb - 1);  // lag[L + nb - 1] for L = j - c
    for (Eigen::Index l = 0; l < lag.size(); ++l)
      lag[l] = kernel_value(params, inv_l2, offset + static_cast<double>(l - (nb - 1)) * *ha);
    for (Eigen::Index c = 0; c < nb; ++c)
      for (Eigen::Index j = 0; j < na; ++j) k(j, c) = lag[j - c + nb - 1];
    return k;
  }

  for (Eigen::Index c = 0; c < nb; ++c)
    for (Eigen::Index j = 0; j < na; ++j) k(j, c) = kernel_value(params, inv_l2, a[j] - b[c]);
  return k;
}

double SpdFactor::log_det() const {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::MatrixXd SpdFactor::inverse() const {
  const Eigen::Index n = llt.matrixLLT().rows();
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  symmetrize(inv);
  return inv;
}

SpdFactor factorize_spd(const Eigen::MatrixXd& a, std::string_view what) {
  const detail::ScopedFlushDenormals ftz;
  const Eigen::Index n = a.rows();
  if (n == 0) return {Eigen::LLT<Eigen::MatrixXd>(a), 0.0};
  double scale = a.diagonal().cwiseAbs().mean();
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  // Pivots are squared diagonal entries of L.
  auto usable = [](const Eigen::LLT<Eigen::MatrixXd>& llt, double min_pivot) {
    if (llt.info() != Eigen::Success) return false;
    const auto d = llt.matrixLLT().diagonal().array();
    return d.allFinite() && (d > 0.0).all() && (d * d).minCoeff() >= min_pivot;
  };
  // Unjittered first, unless a pivot is at rounding level (numerically singular).
  Eigen::LLT<Eigen::MatrixXd> exact(a);
  const double rank_floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
  if (usable(exact, rank_floor)) return {std::move(exact), 0.0};
  double jitter = 0.0;
  for (double level : kJitterLadder) {
    jitter = level * scale;
    Eigen::MatrixXd m = a;
    m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (usable(llt, 0.0)) return {std::move(llt), jitter};
  }
  throw NumericalFailure("cholesky of " + std::string(what) + " failed up to jitter " + std::to_string(jitter),
                         jitter);
}

ObjectiveValue evaluate_objective(const FitProblem& problem, const KernelParams& params, bool with_gradient) {
  const detail::ScopedFlushDenormals ftz;
  const Eigen::Index n = problem.times.size();
  if (problem.residual.size() != n) throw InvalidArgument("fit problem: residual length mismatch");
  const bool has_extra = problem.extra_cov.size() > 0;
  const bool has_corr = problem.correction.size() > 0;

  ObjectiveValue out;
  if (n == 0) {
    if (with_gradient) out.gradient = Eigen::VectorXd::Zero(params.dimension());
    return out;
  }

  const Eigen::MatrixXd k = kernel_matrix(params, problem.times, problem.times);
  Eigen::MatrixXd psi = k;
  psi.diagonal().array() += params.noise_var;
  if (has_extra) psi += problem.extra_cov;
  const SpdFactor f = factorize_spd(psi, "training covariance");

  const Eigen::VectorXd alpha = f.llt.solve(problem.residual);
  double value = problem.residual.dot(alpha) + f.log_det() + static_cast<double>(n) * kLog2Pi;

  if (!with_gradient) {
    if (has_corr) value += f.llt.solve(problem.correction).trace();
    out.value = -0.5 * value;
    return out;
  }

  const Eigen::MatrixXd psi_inv = f.inverse();
  Eigen::MatrixXd w = alpha * alpha.transpose() - psi_inv;
  if (has_corr) {
    value += (psi_inv.array() * problem.correction.array()).sum();
    w.noalias() += psi_inv * problem.correction * psi_inv;
  }
  out.value = -0.5 * value;

  // d Psi / d log-param, contracted against W: grad_j = 1/2 sum(W .* dPsi_j).
  const double inv_l2 = 1.0 / (params.lengthscale * params.lengthscale);
  double g_var = 0.0, g_len = 0.0, g_per = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double wk = w(r, c) * k(r, c);
      const double d = problem.times[r] - problem.times[c];
      g_var += wk;
      double dl = d * d * inv_l2;
      if (params.period) {
        const double u = std::numbers::pi * d / *params.period;
        const double s = std::sin(u);
        dl += 4.0 * s * s * inv_l2;
        g_per += wk * 2.0 * u * std::sin(2.0 * u) * inv_l2;
      }
      g_len += wk * dl;
    }
  }
  out.gradient.resize(params.dimension());
  Eigen::Index j = 0;
  out.gradient[j++] = 0.5 * g_var;
  out.gradient[j++] = 0.5 * g_len;
  if (params.period) out.gradient[j++] = 0.5 * g_per;
  out.gradient[j] = 0.5 * params.noise_var * w.trace();
  return out;
}

double log_marginal_likelihood(const KernelParams& params, const Eigen::VectorXd& mean_fn, const TimeSeries& ts) {
  if (static_cast<std::size_t>(mean_fn.size()) != ts.size())
    throw InvalidArgument("log_marginal_likelihood: mean length mismatch");
  return evaluate_objective({ts.grid.points(), ts.values - mean_fn, {}, {}}, params, false).value;
}

Eigen::VectorXd log_marginal_likelihood_gradient(const KernelParams& params, const Eigen::VectorXd& mean_fn,
                                                 const TimeSeries& ts) {
  if (static_cast<std::size_t>(mean_fn.size()) != ts.size())
    throw InvalidArgument("log_marginal_likelihood_gradient: mean length mismatch");
  return evaluate_objective({ts.grid.points(), ts.values - mean_fn, {}, {}}, params, true).gradient;
}

namespace {

// Box in log space, scaled to the data so fits are unit-free.
detail::Box bounds_for(const FitProblem& problem, bool has_period) {
  const Eigen::Index n = problem.times.size();
  double scale = n > 0 ? problem.residual.squaredNorm() / static_cast<double>(n) : 0.0;
  if (problem.correction.size() > 0 && n > 0) scale += problem.correction.trace() / static_cast<double>(n);
  if (problem.extra_cov.size() > 0 && n > 0) scale = std::max(scale, problem.extra_cov.trace() / static_cast<double>(n));
  scale = std::max({scale, problem.scale_floor, 1e-12});

  double min_dt = 1.0, span = 1.0;
  if (n >= 2) {
    Eigen::VectorXd t = problem.times;
    std::sort(t.data(), t.data() + n);
    min_dt = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 1; j < n; ++j)
      if (t[j] > t[j - 1]) min_dt = std::min(min_dt, t[j] - t[j - 1]);
    if (!std::isfinite(min_dt)) min_dt = 1.0;
    span = std::max(t[n - 1] - t[0], min_dt);
  }

  const Eigen::Index dim = has_period ? 4 : 3;
  detail::Box box{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
  Eigen::Index j = 0;
  box.lower[j] = std::log(1e-6 * scale);
  box.upper[j++] = std::log(1e4 * scale);
  box.lower[j] = std::log(0.1 * min_dt);
  box.upper[j++] = std::log(10.0 * span);
  if (has_period) {
    box.lower[j] = std::log(2.0 * min_dt);
    box.upper[j++] = std::log(2.0 * span);
  }
  box.lower[j] = std::log(1e-8 * scale);
  box.upper[j] = std::log(10.0 * scale);
  return box;
}

}  // namespace

KernelParams fit_problem(const FitProblem& problem, const KernelParams& init, const OptimizerConfig& opt) {
  const detail::ScopedFlushDenormals ftz;
  init.validate();
  const bool has_period = init.has_period();
  const detail::Box box = bounds_for(problem, has_period);

  KernelParams best = init;
  double best_value = evaluate_objective(problem, init, false).value;

  const detail::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    ObjectiveValue v = evaluate_objective(problem, from_log_space(x, has_period), grad != nullptr);
    if (grad) *grad = std::move(v.gradient);
    return v.value;
  };

  const Eigen::VectorXd x_init = box.clamp(to_log_space(init));
  const std::size_t starts = std::max<std::size_t>(opt.restarts, 1);
  for (std::size_t r = 0; r < starts; ++r) {
    Eigen::VectorXd x0 = x_init;
    if (r > 0) {
      // Deterministic spread: lengthscale by 3^{+-k}, variance alternating.
      const double k = static_cast<double>((r + 1) / 2);
      const double sign = (r % 2 == 1) ? 1.0 : -1.0;
      x0[1] += sign * k * std::log(3.0);
      x0[0] += -sign * 0.5 * std::log(3.0);
      x0 = box.clamp(x0);
    }
    detail::MaximizeResult res;
    try {
      res = detail::maximize_bfgs(objective, x0, box, opt.max_iterations, opt.tolerance);
    } catch (const NumericalFailure&) {
      if (r == 0) throw;
      continue;
    }
    if (std::isfinite(res.value) && res.value > best_value) {
      best_value = res.value;
      best = from_log_space(res.x, has_period);
    }
  }
  return best;
}

KernelParams fit_hyperparams(const TimeSeries& ts, const Eigen::VectorXd& mean_fn, const KernelParams& init,
                             const OptimizerConfig& opt) {
  if (static_cast<std::size_t>(mean_fn.size()) != ts.size())
    throw InvalidArgument("fit_hyperparams: mean length mismatch");
  return fit_problem({ts.grid.points(), ts.values - mean_fn, {}, {}}, init, opt);
}

GpPosterior condition(const TimeGrid& grid, const Eigen::VectorXd& prior_train, const Eigen::VectorXd& prior_query,
                      const Eigen::MatrixXd& k_tt, const Eigen::MatrixXd& k_tq, const Eigen::MatrixXd& k_qq,
                      double noise_var, const Eigen::VectorXd& y_train) {
  const detail::ScopedFlushDenormals ftz;
  if (y_train.size() == 0) return {grid, prior_query, k_qq};
  Eigen::MatrixXd a = k_tt;
  a.diagonal().array() += noise_var;
  const SpdFactor f = factorize_spd(a, "training covariance");
  const Eigen::VectorXd alpha = f.llt.solve(y_train - prior_train);
  Eigen::VectorXd mean = prior_query + k_tq.transpose() * alpha;
  const Eigen::MatrixXd v = f.llt.matrixL().solve(k_tq);
  Eigen::MatrixXd cov = k_qq;
  cov.noalias() -= v.transpose() * v;
  symmetrize(cov);
  return {grid, std::move(mean), std::move(cov)};
}

GpPosterior posterior(const KernelParams& params, const Eigen::VectorXd& prior_mean, const Observations& train,
                      const TimeGrid& query) {
  params.validate();
  const Eigen::Index nt = train.size();
  const auto nq = static_cast<Eigen::Index>(query.size());
  if (train.values.size() != nt) throw InvalidArgument("posterior: training times/values length mismatch");
  if (prior_mean.size() != nt + nq) throw InvalidArgument("posterior: prior mean must cover train and query points");
  const Eigen::VectorXd tq = query.points();
  return condition(query, prior_mean.head(nt), prior_mean.tail(nq), kernel_matrix(params, train.times, train.times),
                   kernel_matrix(params, train.times, tq), kernel_matrix(params, tq, tq), params.noise_var,
                   train.values);
}

GpPosterior posterior(const KernelParams& params, const Eigen::VectorXd& prior_mean, const TimeSeries& train,
                      const TimeGrid& query) {
  return posterior(params, prior_mean, Observations::of(train), query);
}

std::vector<Eigen::VectorXd> sample_paths(const GpPosterior& post, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("sample_paths needs count >= 1");
  const Eigen::Index n = post.mean.size();
  if (post.cov.rows() != n || post.cov.cols() != n) throw InvalidArgument("sample_paths: covariance shape mismatch");
  const SpdFactor f = factorize_spd(post.cov, "posterior covariance");
  const Eigen::MatrixXd l = f.llt.matrixL();

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  Eigen::VectorXd z(n);
  for (std::size_t s = 0; s < count; ++s) {
    for (Eigen::Index j = 0; j < n; ++j) z[j] = normal(rng);
    out.push_back(post.mean + l.triangularView<Eigen::Lower>() * z);
  }
  return out;
}

}  // namespace domino::gp
