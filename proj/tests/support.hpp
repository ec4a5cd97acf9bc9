#pragma once

// Independent reference computations used by the tests. Everything here is
// dense and direct; none of it calls the library's solvers.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "dsoba/linalg.hpp"
#include "dsoba/logcosh.hpp"
#include "dsoba/quadratic.hpp"

namespace oracle {

using dsoba::Mat;
using dsoba::Vec;

/// ||W - 11'/n||_2 from the eigenvalues of (W - J)'(W - J).
inline double dense_rho(const Mat& w) {
  const auto n = w.rows();
  const Mat dev = w - Mat::Constant(n, n, 1.0 / static_cast<double>(n));
  const Mat gram = dev.transpose() * dev;
  const Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// Largest |lambda_k|, k != 0, of the symmetric circulant with first row
/// (self, side, 0, ..., 0, side).
inline double circulant_rho(int n, double self, double side) {
  double r = 0.0;
  for (int k = 1; k < n; ++k) {
    r = std::max(r, std::abs(self + 2.0 * side * std::cos(2.0 * std::numbers::pi * k / n)));
  }
  return r;
}

/// Network-mean matrices of a quadratic instance, assembled from the nodes.
struct DenseQuadratic {
  Mat P, Q, R, A, B;
  Vec q, c;

  explicit DenseQuadratic(const dsoba::QuadraticProblem& prob) {
    const int n = prob.n_nodes();
    const auto& first = prob.node(0);
    P = Mat::Zero(first.P.rows(), first.P.cols());
    Q = Mat::Zero(first.Q.rows(), first.Q.cols());
    R = Mat::Zero(first.R.rows(), first.R.cols());
    A = Mat::Zero(first.A.rows(), first.A.cols());
    B = Mat::Zero(first.B.rows(), first.B.cols());
    q = Vec::Zero(first.q.size());
    c = Vec::Zero(first.c.size());
    for (int i = 0; i < n; ++i) {
      const auto& nd = prob.node(i);
      P += nd.P;
      Q += nd.Q;
      R += nd.R;
      A += nd.A;
      B += nd.B;
      q += nd.q;
      c += nd.c;
    }
    const double inv = 1.0 / n;
    P *= inv;
    Q *= inv;
    R *= inv;
    A *= inv;
    B *= inv;
    q *= inv;
    c *= inv;
  }

  Vec y_star(const Vec& x) const { return A.fullPivLu().solve(-(B * x + c)); }
  Vec z_star(const Vec& x) const {
    const Vec y = y_star(x);
    return A.fullPivLu().solve(P * y + Q * x + q);
  }
  double phi(const Vec& x) const {
    const Vec y = y_star(x);
    return 0.5 * y.dot(P * y) + y.dot(Q * x + q) + 0.5 * x.dot(R * x);
  }
  Vec grad_phi(const Vec& x) const {
    const Vec y = y_star(x);
    return Q.transpose() * y + R * x - B.transpose() * z_star(x);
  }
  /// Minimiser of Phi from the normal equations of the composed quadratic.
  Vec argmin() const {
    const Mat M = -A.fullPivLu().solve(B);
    const Vec m = -A.fullPivLu().solve(c);
    const Mat H = M.transpose() * P * M + M.transpose() * Q + Q.transpose() * M + R;
    const Vec lin = M.transpose() * (P * m + q) + Q.transpose() * m;
    return (0.5 * (H + H.transpose())).fullPivLu().solve(-lin);
  }
};

/// Central difference of Phi, each Phi value from a dense lower-level solve.
inline Vec fd_grad_phi(const DenseQuadratic& dq, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec xp = x;
    Vec xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (dq.phi(xp) - dq.phi(xm)) / (2.0 * h);
  }
  return g;
}

/// Hessian of g_i(x, .) for the log-cosh family, as a dense matrix.
inline Mat logcosh_hessian(const dsoba::LogCoshProblem& p, int i, const Vec& x, const Vec& y) {
  const Vec u = y + p.node(i).B * x;
  Vec d(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double c = std::cosh(u(j));
    d(j) = 1.0 / (c * c);
  }
  return p.node(i).A + Mat(d.asDiagonal());
}

/// Mixed block d/dx grad_y g_i, dense (p x d).
inline Mat logcosh_mixed(const dsoba::LogCoshProblem& p, int i, const Vec& x, const Vec& y) {
  const Vec u = y + p.node(i).B * x;
  Vec d(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double c = std::cosh(u(j));
    d(j) = 1.0 / (c * c);
  }
  return d.asDiagonal() * p.node(i).B;
}

/// Lipschitz constant of y -> grad22 g(x, y) for the log-cosh family. The
/// third derivative tensor is diagonal with entries (logcosh)'''(u_j) =
/// -2 sech^2(u) tanh(u), so its norm is the sup of that scalar, found here by
/// dense sampling.
inline double logcosh_third_derivative_bound() {
  double best = 0.0;
  for (int k = -200000; k <= 200000; ++k) {
    const double u = k * 1e-4;
    const double c = std::cosh(u);
    best = std::max(best, std::abs(-2.0 * std::tanh(u) / (c * c)));
  }
  return best * (1.0 + 1e-6);
}

/// Trailing median with window w, written independently of the library.
inline std::vector<double> trailing_median(const std::vector<double>& v, int w) {
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::size_t lo = k + 1 >= static_cast<std::size_t>(w) ? k + 1 - w : 0;
    std::vector<double> win(v.begin() + static_cast<long>(lo), v.begin() + static_cast<long>(k) + 1);
    std::sort(win.begin(), win.end());
    const std::size_t m = win.size();
    out.push_back(m % 2 ? win[m / 2] : 0.5 * (win[m / 2 - 1] + win[m / 2]));
  }
  return out;
}

/// Least-squares slope of log(err) against log(delta).
inline double loglog_slope(const std::vector<double>& delta, const std::vector<double>& err) {
  const auto n = static_cast<double>(delta.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < delta.size(); ++k) {
    const double lx = std::log(delta[k]);
    const double ly = std::log(err[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle
