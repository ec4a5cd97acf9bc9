#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/problem.hpp"
#include "dsoba/quadratic.hpp"
#include "dsoba/rng.hpp"

namespace dsoba {

/// Non-quadratic lower level with a smooth x-y coupling:
///   g_i(x, y) = 1/2 y'A_i y + sum_j logcosh(y_j + (B_i x)_j) + c_i'y
///   f_i(x, y) = 1/2 ||y - a_i||^2 + 1/2 r ||x||^2
/// The lower Hessian A_i + diag(sech^2(u)) varies with (x, y), so central
/// differences are not exact. Samples use the same linear noise model as the
/// quadratic family.
class LogCoshProblem {
 public:
  struct Node {
    Mat A, B;
    Vec c, a;
  };
  using UpperSample = QuadraticProblem::UpperSample;
  using LowerSample = QuadraticProblem::LowerSample;

  /// Lipschitz constant of y -> diag(sech^2(y + Bx)): max |d/du sech^2 u|.
  static double sech2_lipschitz() { return 4.0 / (3.0 * std::sqrt(3.0)); }

  LogCoshProblem(std::vector<Node> nodes, double upper_reg, QuadraticNoise noise = {})
      : nodes_(std::move(nodes)), reg_(upper_reg), noise_(noise) {
    if (nodes_.empty()) throw Error(ErrorCode::IncompatibleSize, "logcosh problem needs nodes");
    p_ = static_cast<int>(nodes_.front().A.rows());
    d_ = static_cast<int>(nodes_.front().B.cols());
    double mu = 1e300;
    double b_norm = 0.0;
    for (const auto& nd : nodes_) {
      mu = std::min(mu, Eigen::SelfAdjointEigenSolver<Mat>(nd.A, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff());
      b_norm = std::max(b_norm, nd.B.size() ? Eigen::JacobiSVD<Mat>(nd.B).singularValues()(0) : 0.0);
    }
    if (!(mu > 0.0)) throw Error(ErrorCode::ValidationError, "A_i must be positive definite");
    // logcosh'' = sech^2 in [0, 1], so mu_g comes from A alone.
    constants_.mu_g = mu;
    constants_.L_hess_g = sech2_lipschitz() * std::pow(1.0 + b_norm, 3);
    constants_.L_grad_f = std::max(1.0, reg_);
  }

  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int dim_x() const { return d_; }
  int dim_y() const { return p_; }
  const ProblemConstants& constants() const { return constants_; }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  Vec coupled(int i, const Vec& x, const Vec& y) const { return y + node(i).B * x; }

  double f(int i, const Vec& x, const Vec& y) const {
    return 0.5 * (y - node(i).a).squaredNorm() + 0.5 * reg_ * x.squaredNorm();
  }
  double g(int i, const Vec& x, const Vec& y) const {
    const Vec u = coupled(i, x, y);
    double lc = 0.0;
    for (Eigen::Index j = 0; j < u.size(); ++j) lc += logcosh(u(j));
    return 0.5 * y.dot(node(i).A * y) + lc + node(i).c.dot(y);
  }
  Vec grad1_f(int, const Vec& x, const Vec&) const { return reg_ * x; }
  Vec grad2_f(int i, const Vec&, const Vec& y) const { return y - node(i).a; }
  Vec grad1_g(int i, const Vec& x, const Vec& y) const {
    return node(i).B.transpose() * coupled(i, x, y).array().tanh().matrix();
  }
  Vec grad2_g(int i, const Vec& x, const Vec& y) const {
    return node(i).A * y + coupled(i, x, y).array().tanh().matrix() + node(i).c;
  }
  Vec hess22_g(int i, const Vec& x, const Vec& y, const Vec& v) const {
    return node(i).A * v + sech2(coupled(i, x, y)).cwiseProduct(v);
  }
  Vec jac12_g(int i, const Vec& x, const Vec& y, const Vec& v) const {
    return node(i).B.transpose() * sech2(coupled(i, x, y)).cwiseProduct(v);
  }

  UpperSample draw_upper(int, Rng& rng) const {
    UpperSample s;
    if (noise_.gradient > 0.0) {
      s.e1 = noise_.gradient * detail::gaussian_matrix(d_, 1, rng);
      s.e2 = noise_.gradient * detail::gaussian_matrix(p_, 1, rng);
    }
    return s;
  }
  LowerSample draw_lower(int, Rng& rng) const {
    LowerSample s;
    if (noise_.hessian > 0.0) {
      const Mat m = detail::gaussian_matrix(p_, p_, rng);
      s.dA = 0.5 * noise_.hessian * (m + m.transpose());
    }
    if (noise_.jacobian > 0.0) s.dB = noise_.jacobian * detail::gaussian_matrix(p_, d_, rng);
    if (noise_.gradient > 0.0) s.dc = noise_.gradient * detail::gaussian_matrix(p_, 1, rng);
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

  /// Numerically stable log(cosh(u)).
  static double logcosh(double u) {
    const double a = std::abs(u);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
  }
  static Vec sech2(const Vec& u) {
    return u.unaryExpr([](double t) {
      const double c = std::cosh(t);
      return 1.0 / (c * c);
    });
  }

 private:
  std::vector<Node> nodes_;
  double reg_ = 1.0;
  QuadraticNoise noise_;
  int p_ = 0;
  int d_ = 0;
  ProblemConstants constants_;
};

struct LogCoshSpec {
  std::uint64_t seed = 0;
  int n_nodes = 1;
  int dim_x = 1;
  int dim_y = 1;
  double coupling = 1.0;       // scale of B
  double heterogeneity = 0.0;  // node-to-node spread of (c_i, a_i)
  double upper_reg = 1.0;
  QuadraticNoise noise;
};

inline LogCoshProblem make_logcosh(const LogCoshSpec& spec) {
  if (spec.dim_x < 1 || spec.dim_y < 1 || spec.n_nodes < 1) {
    throw Error(ErrorCode::ValidationError, "logcosh dimensions and node count must be >= 1");
  }
  using namespace detail;
  Rng rng(derive_seed(spec.seed, 0x10c05));
  const int p = spec.dim_y;
  const int d = spec.dim_x;
  const Mat A0 = 0.5 * Mat::Identity(p, p);
  const Mat B0 = spec.coupling / std::sqrt(static_cast<double>(p)) * gaussian_matrix(p, d, rng);
  const Vec c0 = gaussian_matrix(p, 1, rng);
  const Vec a0 = gaussian_matrix(p, 1, rng);
  auto dc = centered(spec.n_nodes, [&] { return gaussian_matrix(p, 1, rng); });
  auto da = centered(spec.n_nodes, [&] { return gaussian_matrix(p, 1, rng); });
  std::vector<LogCoshProblem::Node> nodes;
  for (int i = 0; i < spec.n_nodes; ++i) {
    const auto k = static_cast<std::size_t>(i);
    nodes.push_back({A0, B0, c0 + spec.heterogeneity * Vec(dc[k]),
                     a0 + spec.heterogeneity * Vec(da[k])});
  }
  return LogCoshProblem(std::move(nodes), spec.upper_reg, spec.noise);
}

}  // namespace dsoba
