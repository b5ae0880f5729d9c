#pragma once

// Brute-force reference computations for the tests. Deliberately naive and
// independent of the library: no Cholesky, no shared helpers.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double sort_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double median_abs_error(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < y.size(); ++i) d.push_back(std::fabs(y[i] - yhat[i]));
  return sort_median(d);
}

inline double se_kernel(double variance, double lengthscale, double d) {
  return variance * std::exp(-d * d / (2.0 * lengthscale * lengthscale));
}

inline Eigen::MatrixXd se_matrix(double variance, double lengthscale, const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b) {
  Eigen::MatrixXd k(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) k(i, j) = se_kernel(variance, lengthscale, a[i] - b[j]);
  return k;
}

inline Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& a) { return a.fullPivLu().inverse(); }

// log N(y | mean, cov) from the textbook density.
inline double gaussian_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd r = y - mean;
  const double n = static_cast<double>(y.size());
  return -0.5 * (r.dot(dense_inverse(cov) * r) + std::log(cov.fullPivLu().determinant()) +
                 n * std::log(2.0 * std::numbers::pi));
}

struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Joint Gaussian [f_t; f_q] conditioned on y_t = f_t + noise.
inline Conditional condition(const Eigen::VectorXd& m_t, const Eigen::VectorXd& m_q, const Eigen::MatrixXd& k_tt,
                             const Eigen::MatrixXd& k_tq, const Eigen::MatrixXd& k_qq, double noise,
                             const Eigen::VectorXd& y) {
  const Eigen::MatrixXd a = dense_inverse(k_tt + noise * Eigen::MatrixXd::Identity(k_tt.rows(), k_tt.cols()));
  return {m_q + k_tq.transpose() * a * (y - m_t), k_qq - k_tq.transpose() * a * k_tq};
}

// Common-mean posterior by explicit precision addition.
inline Conditional precision_sum(const Eigen::MatrixXd& k0, const Eigen::VectorXd& m0,
                                 const std::vector<Eigen::MatrixXd>& psi, const std::vector<Eigen::VectorXd>& y) {
  Eigen::MatrixXd prec = dense_inverse(k0);
  Eigen::VectorXd rhs = prec * m0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const Eigen::MatrixXd pi = dense_inverse(psi[i]);
    prec += pi;
    rhs += pi * y[i];
  }
  const Eigen::MatrixXd cov = dense_inverse(prec);
  return {cov * rhs, cov};
}

// p_i = prod over prior epochs a of exp(1/2 - |i in z_a| / norm), times M_i,
// normalised. Visits are counted by scanning each walk once per series.
inline std::vector<double> product_weights(const std::vector<std::vector<std::size_t>>& walks,
                                           const std::vector<double>& m, double norm) {
  std::vector<double> p(m.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double prod = 1.0;
    for (const auto& z : walks) {
      double visits = 0.0;
      for (std::size_t idx : z)
        if (idx == i) visits += 1.0;
      prod *= std::exp(0.5 - visits / norm);
    }
    p[i] = prod * m[i];
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

}  // namespace oracle
