#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/problem.hpp"

namespace dsoba {

/// Update directions for (x, y, z) at one node.
struct DirectionTriple {
  Vec d_x;
  Vec d_y;
  Vec d_z;
};

enum class HvpMode { SecondOrder, FiniteDifference };

/// p_H ~ grad22 g z (size p), p_J ~ grad12 g z (size d).
struct HvpPair {
  Vec p_H;
  Vec p_J;
  HvpMode mode = HvpMode::SecondOrder;
  double delta = 0.0;  // perturbation used in FiniteDifference mode
};

namespace detail {
template <BilevelProblem P>
void check_point(const P& p, const Vec& x, const Vec& y, const Vec& z) {
  require_size(x.size(), p.dim_x(), "x");
  require_size(y.size(), p.dim_y(), "y");
  require_size(z.size(), p.dim_y(), "z");
}
}  // namespace detail

/// Exact node directions:
///   d_x = grad1 f_i - grad12 g_i z,  d_y = grad2 g_i,  d_z = grad22 g_i z - grad2 f_i.
template <BilevelProblem P>
DirectionTriple directions_deterministic(const P& p, int node, const Vec& x, const Vec& y,
                                         const Vec& z) {
  detail::check_point(p, x, y, z);
  return {p.grad1_f(node, x, y) - p.jac12_g(node, x, y, z), p.grad2_g(node, x, y),
          p.hess22_g(node, x, y, z) - p.grad2_f(node, x, y)};
}

/// Sampled Hessian/Jacobian-vector products from one lower-level draw.
template <BilevelProblem P>
HvpPair hvp_so(const P& p, int node, const Vec& x, const Vec& y, const Vec& z,
               const typename P::LowerSample& zeta) {
  detail::check_point(p, x, y, z);
  return {p.hess22_G(node, x, y, z, zeta), p.jac12_G(node, x, y, z, zeta), HvpMode::SecondOrder,
          0.0};
}

/// Central differences of sampled gradients along z. Both evaluations use
/// the same sample `zeta`.
template <BilevelProblem P>
HvpPair hvp_fo(const P& p, int node, const Vec& x, const Vec& y, const Vec& z, double delta,
               const typename P::LowerSample& zeta) {
  detail::check_point(p, x, y, z);
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw Error(ErrorCode::DegenerateDelta, "finite-difference delta must be positive");
  }
  const Vec y_plus = y + delta * z;
  const Vec y_minus = y - delta * z;
  const double scale = 1.0 / (2.0 * delta);
  Vec p_H = scale * (p.grad2_G(node, x, y_plus, zeta) - p.grad2_G(node, x, y_minus, zeta));
  Vec p_J = scale * (p.grad1_G(node, x, y_plus, zeta) - p.grad1_G(node, x, y_minus, zeta));
  return {std::move(p_H), std::move(p_J), HvpMode::FiniteDifference, delta};
}

/// Perturbation schedule for the finite-difference products. Fixed by
/// default; the adaptive rule picks the largest delta whose bias bound
/// (1/3) L^2 delta^2 ||z||^4 stays under target_bias^2.
struct DeltaConfig {
  double fixed = 1e-3;
  bool adaptive = false;
  double max_delta = 1e-1;
  double target_bias = 1e-6;
  double hessian_lipschitz = 1.0;

  double at(const Vec& z) const {
    if (!adaptive) return fixed;
    const double zz = z.squaredNorm();
    if (zz == 0.0) return max_delta;
    const double bound = std::sqrt(3.0) * target_bias / (hessian_lipschitz * zz);
    return std::min(max_delta, bound);
  }
};

/// Bias bound for the finite-difference products: (1/3) L^2 delta^2 ||z||^4.
inline double finite_difference_bias_bound(double hessian_lipschitz, double delta, const Vec& z) {
  const double zz = z.squaredNorm();
  return hessian_lipschitz * hessian_lipschitz * delta * delta * zz * zz / 3.0;
}

}  // namespace dsoba
