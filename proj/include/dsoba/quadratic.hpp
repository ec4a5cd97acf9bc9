#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/problem.hpp"
#include "dsoba/rng.hpp"

namespace dsoba {

/// Node data for
///   f_i(x, y) = 1/2 y'P y + y'(Q x + q) + 1/2 x'R x
///   g_i(x, y) = 1/2 y'A y + y'(B x + c)
struct QuadraticNode {
  Mat P, Q, R, A, B;
  Vec q, c;
};

/// Sample noise for the quadratic family. The lower-level sample perturbs
/// (A, B, c) so stochastic gradients, Hessians and Jacobians all come from
/// one sampled G; the upper-level sample adds noise to both gradients of F.
struct QuadraticNoise {
  double hessian = 0.0;   // entries of the symmetric perturbation of A
  double jacobian = 0.0;  // entries of the perturbation of B
  double gradient = 0.0;  // additive gradient noise (c for G, both grads for F)

  bool deterministic() const { return hessian == 0.0 && jacobian == 0.0 && gradient == 0.0; }
};

class QuadraticProblem {
 public:
  struct UpperSample {
    Vec e1;  // empty when noise-free
    Vec e2;
  };
  struct LowerSample {
    Mat dA;
    Mat dB;
    Vec dc;
  };

  QuadraticProblem(std::vector<QuadraticNode> nodes, QuadraticNoise noise = {})
      : nodes_(std::move(nodes)), noise_(noise) {
    if (nodes_.empty()) throw Error(ErrorCode::IncompatibleSize, "quadratic problem needs nodes");
    d_ = static_cast<int>(nodes_.front().R.rows());
    p_ = static_cast<int>(nodes_.front().A.rows());
    for (const auto& nd : nodes_) check_node(nd);
    const double inv_n = 1.0 / static_cast<double>(nodes_.size());
    mean_ = QuadraticNode{Mat::Zero(p_, p_), Mat::Zero(p_, d_), Mat::Zero(d_, d_),
                          Mat::Zero(p_, p_), Mat::Zero(p_, d_), Vec::Zero(p_), Vec::Zero(p_)};
    for (const auto& nd : nodes_) {
      mean_.P += inv_n * nd.P;
      mean_.Q += inv_n * nd.Q;
      mean_.R += inv_n * nd.R;
      mean_.A += inv_n * nd.A;
      mean_.B += inv_n * nd.B;
      mean_.q += inv_n * nd.q;
      mean_.c += inv_n * nd.c;
    }
    compute_constants();
    mean_A_ldlt_.compute(mean_.A);
  }

  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int dim_x() const { return d_; }
  int dim_y() const { return p_; }
  const ProblemConstants& constants() const { return constants_; }
  const QuadraticNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const QuadraticNode& mean() const { return mean_; }
  const QuadraticNoise& noise() const { return noise_; }

  // deterministic oracles ---------------------------------------------------

  double f(int i, const Vec& x, const Vec& y) const {
    const auto& nd = node(i);
    return 0.5 * y.dot(nd.P * y) + y.dot(nd.Q * x + nd.q) + 0.5 * x.dot(nd.R * x);
  }
  double g(int i, const Vec& x, const Vec& y) const {
    const auto& nd = node(i);
    return 0.5 * y.dot(nd.A * y) + y.dot(nd.B * x + nd.c);
  }
  Vec grad1_f(int i, const Vec& x, const Vec& y) const {
    const auto& nd = node(i);
    return nd.Q.transpose() * y + nd.R * x;
  }
  Vec grad2_f(int i, const Vec& x, const Vec& y) const {
    const auto& nd = node(i);
    return nd.P * y + nd.Q * x + nd.q;
  }
  Vec grad1_g(int i, const Vec& /*x*/, const Vec& y) const { return node(i).B.transpose() * y; }
  Vec grad2_g(int i, const Vec& x, const Vec& y) const {
    const auto& nd = node(i);
    return nd.A * y + nd.B * x + nd.c;
  }
  Vec hess22_g(int i, const Vec&, const Vec&, const Vec& v) const { return node(i).A * v; }
  Vec jac12_g(int i, const Vec&, const Vec&, const Vec& v) const {
    return node(i).B.transpose() * v;
  }

  // stochastic oracles ------------------------------------------------------

  UpperSample draw_upper(int, Rng& rng) const {
    UpperSample s;
    if (noise_.gradient > 0.0) {
      s.e1 = gaussian(d_, noise_.gradient, rng);
      s.e2 = gaussian(p_, noise_.gradient, rng);
    }
    return s;
  }

  LowerSample draw_lower(int, Rng& rng) const {
    LowerSample s;
    if (noise_.hessian > 0.0) {
      Mat m(p_, p_);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = standard_normal(rng);
      s.dA = 0.5 * noise_.hessian * (m + m.transpose());
    }
    if (noise_.jacobian > 0.0) {
      s.dB = Mat(p_, d_);
      for (Eigen::Index k = 0; k < s.dB.size(); ++k) {
        s.dB.data()[k] = noise_.jacobian * standard_normal(rng);
      }
    }
    if (noise_.gradient > 0.0) s.dc = gaussian(p_, noise_.gradient, rng);
    return s;
  }

  Vec grad1_F(int i, const Vec& x, const Vec& y, const UpperSample& s) const {
    Vec out = grad1_f(i, x, y);
    if (s.e1.size()) out += s.e1;
    return out;
  }
  Vec grad2_F(int i, const Vec& x, const Vec& y, const UpperSample& s) const {
    Vec out = grad2_f(i, x, y);
    if (s.e2.size()) out += s.e2;
    return out;
  }
  Vec grad1_G(int i, const Vec& x, const Vec& y, const LowerSample& s) const {
    Vec out = grad1_g(i, x, y);
    if (s.dB.size()) out += s.dB.transpose() * y;
    return out;
  }
  Vec grad2_G(int i, const Vec& x, const Vec& y, const LowerSample& s) const {
    Vec out = grad2_g(i, x, y);
    if (s.dA.size()) out += s.dA * y;
    if (s.dB.size()) out += s.dB * x;
    if (s.dc.size()) out += s.dc;
    return out;
  }
  Vec hess22_G(int i, const Vec& x, const Vec& y, const Vec& v, const LowerSample& s) const {
    Vec out = hess22_g(i, x, y, v);
    if (s.dA.size()) out += s.dA * v;
    return out;
  }
  Vec jac12_G(int i, const Vec& x, const Vec& y, const Vec& v, const LowerSample& s) const {
    Vec out = jac12_g(i, x, y, v);
    if (s.dB.size()) out += s.dB.transpose() * v;
    return out;
  }

  // closed forms ------------------------------------------------------------

  /// y*(x) = -Abar^{-1} (Bbar x + cbar)
  Vec closed_form_y_star(const Vec& x) const {
    return -mean_A_ldlt_.solve(mean_.B * x + mean_.c);
  }

  std::optional<double> phi_star() const { return phi_star_; }
  const std::optional<Vec>& phi_argmin() const { return phi_argmin_; }

 private:
  static Vec gaussian(int n, double scale, Rng& rng) {
    Vec v(n);
    for (int k = 0; k < n; ++k) v(k) = scale * standard_normal(rng);
    return v;
  }

  void check_node(const QuadraticNode& nd) const {
    const bool ok = nd.P.rows() == p_ && nd.P.cols() == p_ && nd.Q.rows() == p_ &&
                    nd.Q.cols() == d_ && nd.R.rows() == d_ && nd.R.cols() == d_ &&
                    nd.A.rows() == p_ && nd.A.cols() == p_ && nd.B.rows() == p_ &&
                    nd.B.cols() == d_ && nd.q.size() == p_ && nd.c.size() == p_;
    if (!ok) throw Error(ErrorCode::DimensionMismatch, "inconsistent quadratic node shapes");
    if (!(nd.P.allFinite() && nd.Q.allFinite() && nd.R.allFinite() && nd.A.allFinite() &&
          nd.B.allFinite() && nd.q.allFinite() && nd.c.allFinite())) {
      throw Error(ErrorCode::ValidationError, "quadratic node has non-finite entries");
    }
  }

  void compute_constants() {
    auto lam_min = [](const Mat& m) {
      return Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
    };
    auto op_norm = [](const Mat& m) {
      return m.size() ? Eigen::JacobiSVD<Mat>(m).singularValues()(0) : 0.0;
    };
    double mu = lam_min(nodes_.front().A);
    double lg = 0.0;
    double lf = 0.0;
    for (const auto& nd : nodes_) {
      mu = std::min(mu, lam_min(nd.A));
      Mat hg(p_ + d_, p_ + d_);
      hg << Mat::Zero(d_, d_), nd.B.transpose(), nd.B, nd.A;
      Mat hf(p_ + d_, p_ + d_);
      hf << nd.R, nd.Q.transpose(), nd.Q, nd.P;
      lg = std::max(lg, op_norm(hg));
      lf = std::max(lf, op_norm(hf));
    }
    if (!(mu > 0.0)) {
      throw Error(ErrorCode::ValidationError, "lower-level matrices A_i are not positive definite");
    }
    constants_.mu_g = mu;
    constants_.L_grad_g = lg;
    constants_.L_grad_f = lf;
    constants_.L_hess_g = 0.0;

    // b1^2, b2^2: node dissimilarity of the linear maps is bounded uniformly
    // only when the maps coincide; record the constant parts otherwise.
    double het_matrices = 0.0;
    double het_vectors = 0.0;
    const auto& n0 = nodes_.front();
    for (const auto& nd : nodes_) {
      het_matrices += (nd.A - n0.A).squaredNorm() + (nd.B - n0.B).squaredNorm() +
                      (nd.P - n0.P).squaredNorm() + (nd.Q - n0.Q).squaredNorm() +
                      (nd.R - n0.R).squaredNorm();
      het_vectors += (nd.q - mean_.q).squaredNorm() + (nd.c - mean_.c).squaredNorm();
    }
    if (het_vectors > 0.0) {
      bool same = true;
      for (const auto& nd : nodes_) same = same && nd.q == n0.q && nd.c == n0.c;
      if (same) het_vectors = 0.0;
    }
    if (het_matrices == 0.0) {
      constants_.b1 = std::sqrt(het_vectors / static_cast<double>(nodes_.size()));
      constants_.b2 = constants_.b1;
    }

    if (noise_.deterministic()) {
      constants_.sigma = 0.0;
    } else {
      // E||dA||_F^2 = h^2 p(p+1)/2, E||dB||_F^2 = j^2 p d, E||e||^2 = s^2 max(p, d)
      const double pp = p_;
      const double dd = d_;
      const double bound = std::max({noise_.hessian * noise_.hessian * pp * (pp + 1.0) / 2.0,
                                     noise_.jacobian * noise_.jacobian * pp * dd,
                                     noise_.gradient * noise_.gradient * std::max(pp, dd)});
      constants_.sigma = std::sqrt(bound);
    }

    // Phi(x) = f(x, M x + m) is quadratic; minimize when its Hessian is PD.
    Eigen::LDLT<Mat> ldlt(mean_.A);
    const Mat M = -ldlt.solve(mean_.B);
    const Vec m = -ldlt.solve(mean_.c);
    const Mat H = M.transpose() * mean_.P * M + M.transpose() * mean_.Q +
                  mean_.Q.transpose() * M + mean_.R;
    const Vec lin = M.transpose() * (mean_.P * m + mean_.q) + mean_.Q.transpose() * m;
    const double c0 = 0.5 * m.dot(mean_.P * m) + m.dot(mean_.q);
    if (lam_min(H) > 1e-10) {
      const Vec xs = -Eigen::LDLT<Mat>(0.5 * (H + H.transpose())).solve(lin);
      phi_argmin_ = xs;
      phi_star_ = 0.5 * xs.dot(H * xs) + lin.dot(xs) + c0;
    }
  }

  std::vector<QuadraticNode> nodes_;
  QuadraticNoise noise_;
  int d_ = 0;
  int p_ = 0;
  QuadraticNode mean_;
  Eigen::LDLT<Mat> mean_A_ldlt_;
  ProblemConstants constants_;
  std::optional<double> phi_star_;
  std::optional<Vec> phi_argmin_;
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

struct QuadraticSpec {
  std::uint64_t seed = 0;
  int n_nodes = 1;
  int dim_x = 1;
  int dim_y = 1;
  double conditioning = 4.0;   // eigenvalues of the shared A spread over [1, conditioning]
  double heterogeneity = 0.0;  // scale of node-to-node perturbations
  QuadraticNoise noise;
};

namespace detail {

inline Mat gaussian_matrix(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = standard_normal(rng);
  return m;
}

inline Mat random_orthogonal(int n, Rng& rng) {
  Eigen::HouseholderQR<Mat> qr(gaussian_matrix(n, n, rng));
  return qr.householderQ() * Mat::Identity(n, n);
}

inline Mat sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Clamps the spectrum of a symmetric matrix from below.
inline Mat project_spectrum(const Mat& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(m));
  const Vec lam = es.eigenvalues().cwiseMax(floor);
  return sym(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
}

/// n zero-mean perturbations (sum exactly centered in exact arithmetic).
template <typename Gen>
std::vector<Mat> centered(int n, Gen&& gen) {
  std::vector<Mat> out;
  for (int i = 0; i < n; ++i) out.push_back(gen());
  if (n > 1) {
    Mat mean = Mat::Zero(out.front().rows(), out.front().cols());
    for (const auto& m : out) mean += m;
    mean /= static_cast<double>(n);
    for (auto& m : out) m -= mean;
  } else {
    out.front().setZero();
  }
  return out;
}

}  // namespace detail

/// Random strongly convex quadratic bilevel instance. A_i are kept above 0.5 I
/// after perturbation; R is shifted so Phi is 1-strongly convex.
inline QuadraticProblem make_quadratic(const QuadraticSpec& spec) {
  if (spec.dim_x < 1 || spec.dim_y < 1 || spec.n_nodes < 1) {
    throw Error(ErrorCode::ValidationError, "quadratic dimensions and node count must be >= 1");
  }
  if (!(spec.conditioning >= 1.0)) {
    throw Error(ErrorCode::ValidationError, "conditioning must be >= 1");
  }
  if (!(spec.heterogeneity >= 0.0)) {
    throw Error(ErrorCode::ValidationError, "heterogeneity must be >= 0");
  }
  using namespace detail;
  Rng rng(derive_seed(spec.seed, 0x71ad));
  const int n = spec.n_nodes;
  const int d = spec.dim_x;
  const int p = spec.dim_y;
  const double scale_p = 1.0 / std::sqrt(static_cast<double>(p));

  Vec spectrum(p);
  for (int k = 0; k < p; ++k) {
    spectrum(k) = p == 1 ? 1.0 : 1.0 + (spec.conditioning - 1.0) * k / (p - 1.0);
  }
  const Mat U = random_orthogonal(p, rng);
  const Mat A0 = sym(U * spectrum.asDiagonal() * U.transpose());
  const Mat B0 = scale_p * gaussian_matrix(p, d, rng);
  const Vec c0 = gaussian_matrix(p, 1, rng);
  const Mat G = gaussian_matrix(p, p, rng);
  const Mat P0 = sym(scale_p * scale_p * G * G.transpose()) + 0.1 * Mat::Identity(p, p);
  const Mat Q0 = 0.5 * scale_p * gaussian_matrix(p, d, rng);
  const Vec q0 = gaussian_matrix(p, 1, rng);

  const double h = spec.heterogeneity;
  auto dA = centered(n, [&] { return Mat(sym(scale_p * gaussian_matrix(p, p, rng))); });
  auto dB = centered(n, [&] { return Mat(scale_p * gaussian_matrix(p, d, rng)); });
  auto dc = centered(n, [&] { return gaussian_matrix(p, 1, rng); });
  auto dP = centered(n, [&] { return Mat(sym(scale_p * gaussian_matrix(p, p, rng))); });
  auto dQ = centered(n, [&] { return Mat(0.5 * scale_p * gaussian_matrix(p, d, rng)); });
  auto dq = centered(n, [&] { return gaussian_matrix(p, 1, rng); });
  auto dR = centered(n, [&] { return Mat(sym(gaussian_matrix(d, d, rng))); });

  std::vector<QuadraticNode> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& nd = nodes[static_cast<std::size_t>(i)];
    const auto k = static_cast<std::size_t>(i);
    nd.A = h > 0.0 ? project_spectrum(A0 + h * dA[k], 0.5) : A0;
    nd.B = B0 + h * dB[k];
    nd.c = c0 + h * Vec(dc[k]);
    nd.P = P0 + h * dP[k];
    nd.Q = Q0 + h * dQ[k];
    nd.q = q0 + h * Vec(dq[k]);
    nd.R = h * dR[k];
  }

  // Shift R so that the Hessian of Phi is >= I.
  Mat Abar = Mat::Zero(p, p), Bbar = Mat::Zero(p, d), Pbar = Mat::Zero(p, p),
      Qbar = Mat::Zero(p, d), Rbar = Mat::Zero(d, d);
  for (const auto& nd : nodes) {
    Abar += nd.A / n;
    Bbar += nd.B / n;
    Pbar += nd.P / n;
    Qbar += nd.Q / n;
    Rbar += nd.R / n;
  }
  const Mat M = -Eigen::LDLT<Mat>(Abar).solve(Bbar);
  const Mat H0 = sym(M.transpose() * Pbar * M + M.transpose() * Qbar + Qbar.transpose() * M + Rbar);
  const double lam = Eigen::SelfAdjointEigenSolver<Mat>(H0, Eigen::EigenvaluesOnly).eigenvalues()(0);
  const double shift = std::max(0.0, 1.0 - lam);
  for (auto& nd : nodes) nd.R += shift * Mat::Identity(d, d);

  return QuadraticProblem(std::move(nodes), spec.noise);
}

/// f_i = 1/2 ||y||^2, g_i = 1/2 ||y - x||^2 on every node, d = p = dim.
/// y*(x) = z*(x) = grad Phi(x) = x.
inline QuadraticProblem make_trivial(int n_nodes, int dim, QuadraticNoise noise = {}) {
  QuadraticNode nd{Mat::Identity(dim, dim), Mat::Zero(dim, dim),   Mat::Zero(dim, dim),
                   Mat::Identity(dim, dim), -Mat::Identity(dim, dim), Vec::Zero(dim),
                   Vec::Zero(dim)};
  return QuadraticProblem(std::vector<QuadraticNode>(static_cast<std::size_t>(n_nodes), nd), noise);
}

}  // namespace dsoba
