#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "dsoba/error.hpp"

namespace dsoba {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": expected size " +
                                                  std::to_string(want) + ", got " +
                                                  std::to_string(got));
  }
}

/// Row mean of an n-by-k matrix replicated back to n rows.
inline Mat replicate_mean(const Mat& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  return mean.replicate(rows.rows(), 1);
}

struct CgResult {
  Vec solution;
  double residual_norm = 0.0;
  int iterations = 0;
  bool indefinite = false;
};

/// Matrix-free conjugate gradients for an SPD operator `apply(v) -> A v`.
/// Stops on absolute residual `tol` or after `max_iter` iterations; flags
/// non-positive curvature instead of continuing.
template <typename Apply>
CgResult conjugate_gradient(Apply&& apply, const Vec& rhs, double tol, int max_iter) {
  CgResult out;
  out.solution = Vec::Zero(rhs.size());
  Vec r = rhs;
  Vec d = r;
  double rr = r.squaredNorm();
  out.residual_norm = std::sqrt(rr);
  for (int k = 0; k < max_iter && out.residual_norm > tol; ++k) {
    const Vec ad = apply(d);
    const double curvature = d.dot(ad);
    if (!(curvature > 0.0)) {
      out.indefinite = true;
      break;
    }
    const double step = rr / curvature;
    out.solution += step * d;
    // recompute the true residual every few steps to avoid drift
    if ((k + 1) % 8 == 0) {
      r = rhs - apply(out.solution);
    } else {
      r -= step * ad;
    }
    const double rr_next = r.squaredNorm();
    d = r + (rr_next / rr) * d;
    rr = rr_next;
    out.residual_norm = std::sqrt(rr);
    out.iterations = k + 1;
  }
  return out;
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace dsoba
