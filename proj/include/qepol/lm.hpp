#pragma once

// Levenberg-Marquardt nonlinear least squares.
//
// Minimizes 0.5 * |r(p)|^2 where r already carries the 1/sigma weights.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qepol/error.hpp"

namespace qepol {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct FitOptions {
  double tol_g = 1e-8;   ///< scaled gradient tolerance
  double tol_x = 1e-10;  ///< relative step tolerance
  int max_iterations = 200;
  double initial_lambda = 1e-3;
  /// Optional box constraints; trial points are projected onto them.
  std::vector<double> lower;
  std::vector<double> upper;
};

struct FitResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  ///< (J^T J)^-1; +inf on unidentifiable directions
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  int n_iterations = 0;
  int n_residuals = 0;
  bool converged = false;
  std::string message;
  std::vector<double> cost_history;  ///< 0.5 |r|^2 at the start and after every accepted step

  double error(Eigen::Index i) const { return std::sqrt(covariance(i, i)); }
};

/// Central-difference Jacobian of `f` at `p`.
inline Eigen::MatrixXd numerical_jacobian(const ResidualFn& f, const Eigen::VectorXd& p) {
  const Eigen::VectorXd r0 = f(p);
  Eigen::MatrixXd jac(r0.size(), p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::fabs(p[j]));
    Eigen::VectorXd hi = p, lo = p;
    hi[j] += h;
    lo[j] -= h;
    jac.col(j) = (f(hi) - f(lo)) / (hi[j] - lo[j]);
  }
  return jac;
}

namespace detail {

inline Eigen::MatrixXd covariance_from_normal(const Eigen::MatrixXd& jtj) {
  const Eigen::Index n = jtj.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jtj);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const Eigen::MatrixXd& vec = eig.eigenvectors();
  const double cutoff = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * 1e-13;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  std::vector<bool> undefined(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (ev[k] > cutoff) {
      cov += vec.col(k) * vec.col(k).transpose() / ev[k];
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::fabs(vec(i, k)) > 1e-6) undefined[static_cast<std::size_t>(i)] = true;
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!undefined[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < n; ++j) cov(i, j) = cov(j, i) = (i == j) ? inf : 0.0;
  }
  return cov;
}

inline void project(Eigen::VectorXd& p, const FitOptions& opt) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (k < opt.lower.size()) p[i] = std::max(p[i], opt.lower[k]);
    if (k < opt.upper.size()) p[i] = std::min(p[i], opt.upper[k]);
  }
}

}  // namespace detail

/// Levenberg-Marquardt with Marquardt diagonal scaling.
///
/// Throws NumericalError if the residuals are not finite at `init`. Non-finite
/// residuals at a trial point reject the step; if no finite step can be found the
/// result comes back with converged = false and a diagnostic message.
inline FitResult levenberg_marquardt(const ResidualFn& residuals, const JacobianFn& jacobian, Eigen::VectorXd init,
                                     const FitOptions& opt = {}) {
  detail::project(init, opt);
  Eigen::VectorXd p = init;
  Eigen::VectorXd r = residuals(p);
  if (!r.allFinite()) throw NumericalError("residuals are not finite at the initial parameters");
  detail::require(r.size() >= p.size(), "need at least as many residuals as parameters");

  auto jac_at = [&](const Eigen::VectorXd& x) {
    return jacobian ? jacobian(x) : numerical_jacobian(residuals, x);
  };

  FitResult out;
  out.n_residuals = static_cast<int>(r.size());
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;
  out.cost_history.push_back(cost);
  Eigen::MatrixXd jac = jac_at(p);
  bool need_jac = false;

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (need_jac) {
      jac = jac_at(p);
      need_jac = false;
    }
    if (!jac.allFinite()) {
      out.message = "jacobian is not finite";
      break;
    }
    const Eigen::VectorXd g = jac.transpose() * r;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));

    // scaled gradient: cosine between r and each column of J
    const double rnorm = std::sqrt(2.0 * cost);
    double gscaled = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      const double cn = std::sqrt(jtj(j, j));
      if (cn > 0.0 && rnorm > 0.0) gscaled = std::max(gscaled, std::fabs(g[j]) / (cn * rnorm));
    }
    if (rnorm == 0.0 || gscaled <= opt.tol_g) {
      out.converged = true;
      out.message = "gradient tolerance reached";
      break;
    }

    bool accepted = false;
    bool small_step = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += lambda * diag;
      const Eigen::VectorXd step = lhs.ldlt().solve(-g);
      Eigen::VectorXd trial = p + step;
      detail::project(trial, opt);
      const double dx = (trial - p).norm();
      if (dx <= opt.tol_x * (p.norm() + opt.tol_x)) {
        small_step = true;
        break;
      }
      const Eigen::VectorXd rt = residuals(trial);
      const double ct = rt.allFinite() ? 0.5 * rt.squaredNorm() : std::numeric_limits<double>::infinity();
      if (ct < cost) {
        p = trial;
        r = rt;
        cost = ct;
        out.cost_history.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        need_jac = true;
        break;
      }
      lambda *= 10.0;
    }
    if (small_step) {
      out.converged = true;
      out.message = "step tolerance reached";
      break;
    }
    if (!accepted) {
      out.message = "no decreasing step found (non-finite or flat residuals)";
      break;
    }
  }
  if (it == opt.max_iterations && !out.converged) out.message = "maximum iterations exceeded";

  if (need_jac) jac = jac_at(p);
  out.params = p;
  out.n_iterations = it;
  out.chi2 = 2.0 * cost;
  const int dof = out.n_residuals - static_cast<int>(p.size());
  out.reduced_chi2 = dof > 0 ? out.chi2 / dof : 0.0;
  out.covariance = jac.allFinite() ? detail::covariance_from_normal(jac.transpose() * jac)
                                   : Eigen::MatrixXd::Constant(p.size(), p.size(), std::numeric_limits<double>::quiet_NaN());
  return out;
}

inline FitResult levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd init, const FitOptions& opt = {}) {
  return levenberg_marquardt(residuals, JacobianFn{}, std::move(init), opt);
}

}  // namespace qepol
