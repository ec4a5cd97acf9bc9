#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <string>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/rng.hpp"

namespace dsoba {

/// Smoothness / noise / heterogeneity constants. Absent when a family has no
/// analytic value for them.
struct ProblemConstants {
  double mu_g = 0.0;
  std::optional<double> L_f;
  std::optional<double> L_grad_f;
  std::optional<double> L_grad_g;
  std::optional<double> L_hess_g;
  std::optional<double> sigma;
  std::optional<double> b1;
  std::optional<double> b2;
};

// clang-format off
/// Per-node bilevel oracle bundle. Deterministic oracles are lower-case
/// (f, g), stochastic ones upper-case (F, G) and take a pre-drawn sample so
/// that several evaluations can share one draw. Hessian and Jacobian
/// oracles are matrix-free products:
///   hess22_g(i, x, y, v) = d^2 g_i / dy^2 * v          (size p)
///   jac12_g(i, x, y, v)  = d^2 g_i / dx dy * v         (size d)
template <typename P>
concept BilevelProblem = requires(const P& p, int i, const Vec& x, const Vec& y, const Vec& v,
                                  Rng& rng, const typename P::UpperSample& xi,
                                  const typename P::LowerSample& zeta) {
  { p.n_nodes() } -> std::convertible_to<int>;
  { p.dim_x() } -> std::convertible_to<int>;
  { p.dim_y() } -> std::convertible_to<int>;
  { p.constants() } -> std::convertible_to<const ProblemConstants&>;

  { p.f(i, x, y) } -> std::convertible_to<double>;
  { p.g(i, x, y) } -> std::convertible_to<double>;
  { p.grad1_f(i, x, y) } -> std::convertible_to<Vec>;
  { p.grad2_f(i, x, y) } -> std::convertible_to<Vec>;
  { p.grad1_g(i, x, y) } -> std::convertible_to<Vec>;
  { p.grad2_g(i, x, y) } -> std::convertible_to<Vec>;
  { p.hess22_g(i, x, y, v) } -> std::convertible_to<Vec>;
  { p.jac12_g(i, x, y, v) } -> std::convertible_to<Vec>;

  { p.draw_upper(i, rng) } -> std::same_as<typename P::UpperSample>;
  { p.draw_lower(i, rng) } -> std::same_as<typename P::LowerSample>;
  { p.grad1_F(i, x, y, xi) } -> std::convertible_to<Vec>;
  { p.grad2_F(i, x, y, xi) } -> std::convertible_to<Vec>;
  { p.grad1_G(i, x, y, zeta) } -> std::convertible_to<Vec>;
  { p.grad2_G(i, x, y, zeta) } -> std::convertible_to<Vec>;
  { p.hess22_G(i, x, y, v, zeta) } -> std::convertible_to<Vec>;
  { p.jac12_G(i, x, y, v, zeta) } -> std::convertible_to<Vec>;
};
// clang-format on

/// Families that know y*(x) in closed form (used instead of Newton-CG).
template <typename P>
concept HasClosedFormLower = requires(const P& p, const Vec& x) {
  { p.closed_form_y_star(x) } -> std::convertible_to<Vec>;
};

/// Families that know min_x Phi(x).
template <typename P>
concept HasPhiStar = requires(const P& p) {
  { p.phi_star() } -> std::convertible_to<std::optional<double>>;
};

template <BilevelProblem P>
std::optional<double> phi_star(const P& problem) {
  if constexpr (HasPhiStar<P>) {
    return problem.phi_star();
  } else {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Network-averaged deterministic oracles: f = (1/N) sum_i f_i, etc.
// ---------------------------------------------------------------------------

namespace detail {
template <typename P, typename Fn>
auto node_mean(const P& problem, Fn&& fn) -> decltype(fn(0)) {
  decltype(fn(0)) acc = fn(0);
  for (int i = 1; i < problem.n_nodes(); ++i) acc += fn(i);
  acc /= static_cast<double>(problem.n_nodes());
  return acc;
}
}  // namespace detail

template <BilevelProblem P>
double global_f(const P& p, const Vec& x, const Vec& y) {
  return detail::node_mean(p, [&](int i) { return p.f(i, x, y); });
}
template <BilevelProblem P>
double global_g(const P& p, const Vec& x, const Vec& y) {
  return detail::node_mean(p, [&](int i) { return p.g(i, x, y); });
}
template <BilevelProblem P>
Vec global_grad1_f(const P& p, const Vec& x, const Vec& y) {
  return detail::node_mean(p, [&](int i) -> Vec { return p.grad1_f(i, x, y); });
}
template <BilevelProblem P>
Vec global_grad2_f(const P& p, const Vec& x, const Vec& y) {
  return detail::node_mean(p, [&](int i) -> Vec { return p.grad2_f(i, x, y); });
}
template <BilevelProblem P>
Vec global_grad2_g(const P& p, const Vec& x, const Vec& y) {
  return detail::node_mean(p, [&](int i) -> Vec { return p.grad2_g(i, x, y); });
}
template <BilevelProblem P>
Vec global_hess22_g(const P& p, const Vec& x, const Vec& y, const Vec& v) {
  return detail::node_mean(p, [&](int i) -> Vec { return p.hess22_g(i, x, y, v); });
}
template <BilevelProblem P>
Vec global_jac12_g(const P& p, const Vec& x, const Vec& y, const Vec& v) {
  return detail::node_mean(p, [&](int i) -> Vec { return p.jac12_g(i, x, y, v); });
}

// ---------------------------------------------------------------------------
// Lower level, auxiliary variable, hypergradient
// ---------------------------------------------------------------------------

inline constexpr double kLowerTol = 1e-10;

struct LowerSolveOptions {
  double tol = kLowerTol;
  int max_newton = 100;
};

/// Damped Newton with matrix-free CG inner solves on g(x, .).
template <BilevelProblem P>
Vec newton_lower_solve(const P& p, const Vec& x, const LowerSolveOptions& opt = {},
                       std::optional<Vec> start = std::nullopt) {
  require_size(x.size(), p.dim_x(), "lower_solve x");
  const int dim = p.dim_y();
  Vec y = start ? *start : Vec::Zero(dim);
  Vec grad = global_grad2_g(p, x, y);
  for (int it = 0; it < opt.max_newton; ++it) {
    if (grad.norm() <= opt.tol) return y;
    auto hvp = [&](const Vec& v) { return global_hess22_g(p, x, y, v); };
    const CgResult cg = conjugate_gradient(hvp, -grad, 1e-3 * opt.tol, 10 * dim + 20);
    if (cg.indefinite) {
      throw Error(ErrorCode::SingularHessian, "lower-level Hessian not positive definite");
    }
    // Armijo backtracking on g
    const double g0 = global_g(p, x, y);
    const double slope = grad.dot(cg.solution);
    double step = 1.0;
    Vec trial = y + cg.solution;
    for (int bt = 0; bt < 40; ++bt) {
      trial = y + step * cg.solution;
      const double gt = global_g(p, x, trial);
      if (gt <= g0 + 1e-4 * step * slope || std::abs(gt - g0) <= 1e-14 * (1.0 + std::abs(g0))) {
        break;
      }
      step *= 0.5;
    }
    y = trial;
    grad = global_grad2_g(p, x, y);
  }
  if (grad.norm() <= opt.tol) return y;
  throw Error(ErrorCode::LowerSolveDiverged,
              "gradient norm " + std::to_string(grad.norm()) + " after " +
                  std::to_string(opt.max_newton) + " Newton steps");
}

/// y*(x) = argmin_y g(x, y), residual ||grad_y g|| <= 1e-10.
template <BilevelProblem P>
Vec lower_solve(const P& p, const Vec& x) {
  if constexpr (HasClosedFormLower<P>) {
    require_size(x.size(), p.dim_x(), "lower_solve x");
    return p.closed_form_y_star(x);
  } else {
    return newton_lower_solve(p, x);
  }
}

/// Solves grad22 g(x, y) z = grad2 f(x, y) by CG at a given lower point.
template <BilevelProblem P>
Vec solve_auxiliary(const P& p, const Vec& x, const Vec& y) {
  const Vec rhs = global_grad2_f(p, x, y);
  auto hvp = [&](const Vec& v) { return global_hess22_g(p, x, y, v); };
  const double tol = 1e-3 * kLowerTol;
  const CgResult cg = conjugate_gradient(hvp, rhs, tol, 20 * p.dim_y() + 20);
  if (cg.indefinite || !cg.solution.allFinite()) {
    throw Error(ErrorCode::SingularHessian, "auxiliary system is not positive definite");
  }
  // CG stagnates near machine precision on large right-hand sides; accept a
  // relative residual at that level.
  const double residual = (hvp(cg.solution) - rhs).norm();
  if (residual > std::max(kLowerTol, 1e-13 * rhs.norm())) {
    throw Error(ErrorCode::SingularHessian,
                "auxiliary solve residual " + std::to_string(residual));
  }
  return cg.solution;
}

/// z*(x) = [grad22 g(x, y*)]^{-1} grad2 f(x, y*).
template <BilevelProblem P>
Vec z_star(const P& p, const Vec& x) {
  return solve_auxiliary(p, x, lower_solve(p, x));
}

/// grad Phi(x) = grad1 f(x, y*) - grad12 g(x, y*) z*(x).
template <BilevelProblem P>
Vec hypergradient_exact(const P& p, const Vec& x) {
  const Vec y = lower_solve(p, x);
  const Vec z = solve_auxiliary(p, x, y);
  return global_grad1_f(p, x, y) - global_jac12_g(p, x, y, z);
}

/// Phi(x) = f(x, y*(x)).
template <BilevelProblem P>
double upper_objective(const P& p, const Vec& x) {
  return global_f(p, x, lower_solve(p, x));
}

}  // namespace dsoba
