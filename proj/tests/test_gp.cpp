#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "domino/errors.hpp"
#include "domino/gp.hpp"
#include "oracles.hpp"

using namespace domino;
using namespace domino::gp;
using series::make_grid;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Eigen::MatrixXd with_noise(Eigen::MatrixXd k, double noise) {
  k.diagonal().array() += noise;
  return k;
}

KernelParams random_params(std::mt19937_64& rng, bool periodic) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  KernelParams p;
  p.variance = std::exp(u(rng));
  p.lengthscale = std::exp(0.8 + u(rng));
  if (periodic) p.period = std::exp(2.0 + 0.5 * u(rng));
  p.noise_var = std::exp(-1.0 + u(rng));
  return p;
}

}  // namespace

TEST_CASE("kernel_matrix examples") {
  const KernelParams v2{2.0, 1.0, std::nullopt, 0.0};
  const Eigen::MatrixXd k0 = kernel_matrix(v2, vec({0.0}), vec({0.0}));
  CHECK(k0.rows() == 1);
  CHECK(k0(0, 0) == 2.0);

  const KernelParams unit{1.0, 1.0, std::nullopt, 0.5};
  const Eigen::MatrixXd k = kernel_matrix(unit, vec({0, 1, 2}), vec({0, 1, 2}));
  for (int i = 0; i < 3; ++i) CHECK(k(i, i) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(k(0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));

  CHECK(kernel_matrix(unit, vec({0.0}), vec({1e3}))(0, 0) == 0.0);
  CHECK_THROWS_AS(kernel_matrix(KernelParams{0.0, 1.0, std::nullopt, 0.0}, vec({0}), vec({0})), InvalidArgument);
}

TEST_CASE("kernel_matrix periodic factor") {
  const KernelParams p{1.5, 2.0, 7.0, 0.0};
  const Eigen::MatrixXd k = kernel_matrix(p, vec({0.0, 0.3}), vec({1.1, 7.0, 0.3}));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double d = (i ? 0.3 : 0.0) - std::array{1.1, 7.0, 0.3}[j];
      const double s = std::sin(std::numbers::pi * d / 7.0);
      CHECK(k(i, j) == doctest::Approx(oracle::se_kernel(1.5, 2.0, d) * std::exp(-2.0 * s * s / 4.0)));
    }
  }
}

TEST_CASE("kernel_matrix regular and irregular inputs agree with the formula") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const Eigen::VectorXd reg = make_grid(-1.0, 0.37, 40).points();
  const Eigen::VectorXd shifted = make_grid(2.0, 0.37, 25).points();
  Eigen::VectorXd irr(30);
  for (auto& x : irr) x = u(rng);
  for (const Eigen::VectorXd* b : std::array<const Eigen::VectorXd*, 3>{&reg, &shifted, &irr}) {
    const Eigen::MatrixXd k = kernel_matrix({1.7, 0.9, std::nullopt, 0.0}, reg, *b);
    const Eigen::MatrixXd o = oracle::se_matrix(1.7, 0.9, reg, *b);
    CHECK((k - o).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("kernel_matrix is symmetric PSD on random inputs") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd t(25);
    for (auto& x : t) x = u(rng);
    const KernelParams p = random_params(rng, rep % 2 == 1);
    const Eigen::MatrixXd k = kernel_matrix(p, t, t);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues();
    CHECK(ev.minCoeff() >= -1e-8 * k.trace());
  }
}

TEST_CASE("log-space packing round trips") {
  const KernelParams p{2.5, 0.3, 12.0, 0.01};
  const Eigen::VectorXd x = to_log_space(p);
  CHECK(x.size() == 4);
  const KernelParams q = from_log_space(x, true);
  CHECK(q.variance == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(q.lengthscale == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(*q.period == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(q.noise_var == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(to_log_space(KernelParams{1, 1, std::nullopt, 1}).size() == 3);
}

TEST_CASE("factorize_spd jitter ladder") {
  const Eigen::MatrixXd spd = with_noise(oracle::se_matrix(1.0, 1.0, vec({0, 1, 2}), vec({0, 1, 2})), 0.1);
  const auto f = factorize_spd(spd);
  CHECK(f.jitter == 0.0);
  CHECK(std::abs(f.log_det() - std::log(spd.determinant())) < 1e-8);
  CHECK(((f.inverse() * spd) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);

  // Rank one: needs a jitter level above the first.
  const Eigen::VectorXd v = vec({1.0, 2.0, 3.0});
  const Eigen::MatrixXd rank1 = v * v.transpose();
  CHECK(factorize_spd(rank1).jitter > 0.0);

  const Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
  try {
    factorize_spd(neg, "test matrix");
    FAIL("expected NumericalFailure");
  } catch (const NumericalFailure& e) {
    CHECK(e.attempted_jitter() == doctest::Approx(kJitterLadder.back()));
    CHECK(std::string(e.what()).find("test matrix") != std::string::npos);
  }
}

TEST_CASE("log_marginal_likelihood examples") {
  const auto grid = make_grid(0.0, 1.0, 6);
  const series::TimeSeries ts(0, grid, vec({1, 2, 0, -1, 3, 0.5}));
  // Tiny lengthscale: K is 0.5 I, so K + noise I = I.
  const KernelParams white{0.5, 1e-3, std::nullopt, 0.5};
  CHECK(log_marginal_likelihood(white, ts.values, ts) == doctest::Approx(-3.0 * std::log(2.0 * std::numbers::pi)));

  const KernelParams p{1.3, 1.7, std::nullopt, 0.2};
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(6, 0.4);
  const double base = log_marginal_likelihood(p, mean, ts);
  const series::TimeSeries scaled(0, grid, mean + 10.0 * (ts.values - mean));
  CHECK(log_marginal_likelihood(p, mean, scaled) < base);
  CHECK_THROWS_AS(log_marginal_likelihood(p, Eigen::VectorXd::Zero(5), ts), InvalidArgument);
}

TEST_CASE("log_marginal_likelihood matches the dense density") {
  const auto grid = make_grid(0.5, 0.8, 5);
  const series::TimeSeries ts(0, grid, vec({0.3, -1.2, 2.2, 0.9, -0.4}));
  const Eigen::VectorXd mean = vec({0.1, 0.0, -0.2, 0.5, 0.3});
  const Eigen::VectorXd t = grid.points();
  for (const KernelParams& p : {KernelParams{1.3, 1.1, std::nullopt, 0.05}, KernelParams{0.7, 2.0, 3.0, 0.3}}) {
    Eigen::MatrixXd k(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double d = t[i] - t[j];
        double e = oracle::se_kernel(p.variance, p.lengthscale, d);
        if (p.period) e *= std::exp(-2.0 * std::pow(std::sin(std::numbers::pi * d / *p.period), 2) / (p.lengthscale * p.lengthscale));
        k(i, j) = e;
      }
    const double want = oracle::gaussian_logpdf(ts.values, mean, with_noise(k, p.noise_var));
    CHECK(std::abs(log_marginal_likelihood(p, mean, ts) - want) < 1e-8);
  }
}

TEST_CASE("objective gradient matches central differences") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  const Eigen::VectorXd t = make_grid(0.0, 1.0, 12).points();
  for (int rep = 0; rep < 24; ++rep) {
    const bool periodic = rep % 2 == 1;
    FitProblem prob;
    prob.times = t;
    prob.residual = Eigen::VectorXd::NullaryExpr(12, [&] { return 2.0 * z(rng); });
    if (rep % 3 >= 1) {
      Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(12, 4, [&] { return 0.3 * z(rng); });
      prob.correction = a * a.transpose();
    }
    if (rep % 3 == 2) prob.extra_cov = oracle::se_matrix(0.5, 3.0, t, t);
    const KernelParams p = random_params(rng, periodic);
    const Eigen::VectorXd x = to_log_space(p);
    const Eigen::VectorXd g = evaluate_objective(prob, p, true).gradient;
    REQUIRE(g.size() == x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = 1e-5;
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (evaluate_objective(prob, from_log_space(xp, periodic), false).value -
                         evaluate_objective(prob, from_log_space(xm, periodic), false).value) /
                        (2.0 * h);
      CHECK(std::abs(g[j] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("objective value with and without gradient agree") {
  FitProblem prob;
  prob.times = make_grid(0, 1, 8).points();
  prob.residual = Eigen::VectorXd::LinSpaced(8, -1, 2);
  prob.correction = 0.1 * Eigen::MatrixXd::Identity(8, 8);
  const KernelParams p{1.0, 2.0, std::nullopt, 0.1};
  CHECK(evaluate_objective(prob, p, true).value == doctest::Approx(evaluate_objective(prob, p, false).value));
}

TEST_CASE("fit_hyperparams recovers a lengthscale") {
  const auto grid = make_grid(0.0, 1.0, 120);
  const KernelParams truth{2.0, 4.0, std::nullopt, 1e-4};
  const GpPosterior prior = posterior(truth, Eigen::VectorXd::Zero(120), Observations{}, grid);
  const Eigen::VectorXd sample = sample_paths(prior, 1, 17).front();
  const series::TimeSeries ts(0, grid, sample + 0.01 * Eigen::VectorXd::LinSpaced(120, -1, 1));
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(120);
  const KernelParams init{1.0, 1.0, std::nullopt, 0.1};
  const KernelParams fit = fit_hyperparams(ts, zero, init);
  CHECK(fit.lengthscale > truth.lengthscale / 2.0);
  CHECK(fit.lengthscale < truth.lengthscale * 2.0);
  CHECK(log_marginal_likelihood(fit, zero, ts) >= log_marginal_likelihood(init, zero, ts) - 1e-9);
}

TEST_CASE("fit_hyperparams never ends below its start") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  const auto grid = make_grid(0.0, 1.0, 30);
  for (int rep = 0; rep < 8; ++rep) {
    const series::TimeSeries ts(0, grid, Eigen::VectorXd::NullaryExpr(30, [&] { return z(rng); }));
    const Eigen::VectorXd mean = Eigen::VectorXd::Zero(30);
    const KernelParams init = random_params(rng, rep % 4 == 3);
    const KernelParams once = fit_hyperparams(ts, mean, init, {2, 60, 1e-6});
    CHECK(log_marginal_likelihood(once, mean, ts) >= log_marginal_likelihood(init, mean, ts) - 1e-9);
    // Restarting at the optimum keeps it.
    const KernelParams twice = fit_hyperparams(ts, mean, once, {1, 60, 1e-6});
    CHECK(log_marginal_likelihood(twice, mean, ts) >= log_marginal_likelihood(once, mean, ts) - 1e-9);
  }
}

TEST_CASE("fit_hyperparams on a constant series") {
  const auto grid = make_grid(0.0, 1.0, 25);
  const series::TimeSeries ts(0, grid, Eigen::VectorXd::Constant(25, 3.0));
  const KernelParams fit = fit_hyperparams(ts, Eigen::VectorXd::Constant(25, 3.0), {1.0, 2.0, std::nullopt, 0.5});
  CHECK(fit.noise_var < 1e-3);
  CHECK(std::isfinite(log_marginal_likelihood(fit, Eigen::VectorXd::Constant(25, 3.0), ts)));
}

TEST_CASE("posterior: noiseless interpolation") {
  const auto grid = make_grid(0.0, 1.0, 6);
  const series::TimeSeries ts(0, grid, vec({0.5, 1.0, -0.3, 0.2, 2.0, 1.1}));
  const KernelParams p{1.0, 1.5, std::nullopt, 0.0};
  const GpPosterior post = posterior(p, Eigen::VectorXd::Zero(12), ts, grid);
  CHECK((post.mean - ts.values).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(post.cov.diagonal().cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("posterior: empty training set returns the prior") {
  const auto grid = make_grid(0.0, 0.5, 7);
  const KernelParams p{2.0, 1.0, std::nullopt, 0.1};
  const Eigen::VectorXd prior = Eigen::VectorXd::LinSpaced(7, 1, 4);
  const GpPosterior post = posterior(p, prior, Observations{}, grid);
  CHECK((post.mean - prior).cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.cov - kernel_matrix(p, grid.points(), grid.points())).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("posterior matches dense block conditioning") {
  const Observations train{vec({0.0, 1.0, 2.5, 4.0}), vec({0.2, -0.5, 1.3, 0.7})};
  const auto query = make_grid(1.5, 2.0, 2);
  const KernelParams p{1.4, 1.2, std::nullopt, 0.15};
  const Eigen::VectorXd prior = vec({0.1, 0.2, 0.3, 0.4, -0.1, 0.05});
  const GpPosterior post = posterior(p, prior, train, query);

  const Eigen::VectorXd tq = query.points();
  const auto o = oracle::condition(prior.head(4), prior.tail(2), oracle::se_matrix(1.4, 1.2, train.times, train.times),
                                   oracle::se_matrix(1.4, 1.2, train.times, tq), oracle::se_matrix(1.4, 1.2, tq, tq),
                                   0.15, train.values);
  CHECK((post.mean - o.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((post.cov - o.cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("posterior variance never exceeds the prior") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  const auto grid = make_grid(0.0, 1.0, 20);
  for (int rep = 0; rep < 10; ++rep) {
    const KernelParams p = random_params(rng, rep % 2 == 0);
    Observations train{vec({0.5, 3.0, 7.2, 11.0, 18.5}), Eigen::VectorXd::NullaryExpr(5, [&] { return z(rng); })};
    const GpPosterior post = posterior(p, Eigen::VectorXd::Zero(25), train, grid);
    const Eigen::MatrixXd prior = kernel_matrix(p, grid.points(), grid.points());
    CHECK((post.cov.diagonal() - prior.diagonal()).maxCoeff() <= 1e-8);
    CHECK((post.cov - post.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("sample_paths") {
  const auto grid = make_grid(0.0, 1.0, 5);
  const GpPosterior degenerate{grid, vec({1, 2, 3, 4, 5}), Eigen::MatrixXd::Zero(5, 5)};
  for (const auto& path : sample_paths(degenerate, 20, 1)) CHECK((path - degenerate.mean).cwiseAbs().maxCoeff() < 1e-4);

  const GpPosterior post = posterior({1.0, 1.0, std::nullopt, 0.1}, Eigen::VectorXd::Zero(5), Observations{}, grid);
  const auto a = sample_paths(post, 3, 42);
  const auto b = sample_paths(post, 3, 42);
  const auto c = sample_paths(post, 3, 43);
  REQUIRE(a.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK((a[i].array() == b[i].array()).all());
  CHECK_FALSE((a[0].array() == c[0].array()).all());
  CHECK_FALSE((a[0].array() == a[1].array()).all());
  CHECK_THROWS_AS(sample_paths(post, 0, 1), InvalidArgument);
}
