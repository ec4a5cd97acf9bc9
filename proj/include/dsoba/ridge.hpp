#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/problem.hpp"
#include "dsoba/rng.hpp"

namespace dsoba {

/// Streaming ridge-regularization tuning on a decentralized linear model.
///   f_i(x, y) = E (xi'y - zeta)^2
///   g_i(x, y) = E (xi'y - zeta)^2 + |x| ||y||^2
/// with xi ~ U(-a, a)^p, a = 2 * 1.5^(1/3), zeta = xi'w_i + N(0, 1) and
/// w_i = w + eps_i, w ~ U(0, 10)^p, eps_i ~ N(0, heterogeneity * I).
struct RidgeTuningSpec {
  std::uint64_t seed = 0;
  int dim = 10;
  double heterogeneity = 0.5;  // variance of the per-node offset eps_i
  int batch = 1;               // samples averaged per oracle draw
};

class RidgeTuningProblem {
 public:
  struct Batch {
    Mat features;  // batch x p
    Vec labels;
  };
  using UpperSample = Batch;
  using LowerSample = Batch;

  static double feature_half_width() { return 2.0 * std::cbrt(1.5); }
  /// Per-coordinate feature variance a^2 / 3.
  static double feature_variance() {
    const double a = feature_half_width();
    return a * a / 3.0;
  }

  RidgeTuningProblem(std::vector<Vec> node_weights, int batch)
      : weights_(std::move(node_weights)), batch_(batch) {
    if (weights_.empty()) throw Error(ErrorCode::IncompatibleSize, "ridge problem needs nodes");
    if (batch_ < 1) throw Error(ErrorCode::ValidationError, "batch must be >= 1");
    p_ = static_cast<int>(weights_.front().size());
    mean_weight_ = Vec::Zero(p_);
    for (const auto& w : weights_) {
      require_size(w.size(), p_, "ridge node weight");
      mean_weight_ += w;
    }
    mean_weight_ /= static_cast<double>(weights_.size());
    // pairwise form so identical nodes give exactly zero
    double spread = 0.0;
    for (const auto& a : weights_) {
      for (const auto& b : weights_) spread += (a - b).squaredNorm();
    }
    const double n = static_cast<double>(weights_.size());
    spread_ = spread / (2.0 * n * n);

    const double s = feature_variance();
    constants_.mu_g = 2.0 * s;
    constants_.L_grad_f = 2.0 * s;
    constants_.b1 = 2.0 * s * std::sqrt(spread_);
    constants_.b2 = constants_.b1;
  }

  int n_nodes() const { return static_cast<int>(weights_.size()); }
  int dim_x() const { return 1; }
  int dim_y() const { return p_; }
  int batch() const { return batch_; }
  const ProblemConstants& constants() const { return constants_; }
  const Vec& node_weight(int i) const { return weights_[static_cast<std::size_t>(i)]; }
  const Vec& mean_weight() const { return mean_weight_; }

  // deterministic (population) oracles ---------------------------------------

  double f(int i, const Vec&, const Vec& y) const {
    return feature_variance() * (y - node_weight(i)).squaredNorm() + 1.0;
  }
  double g(int i, const Vec& x, const Vec& y) const {
    return f(i, x, y) + std::abs(x(0)) * y.squaredNorm();
  }
  Vec grad1_f(int, const Vec&, const Vec&) const { return Vec::Zero(1); }
  Vec grad2_f(int i, const Vec&, const Vec& y) const {
    return 2.0 * feature_variance() * (y - node_weight(i));
  }
  Vec grad1_g(int, const Vec& x, const Vec& y) const {
    return Vec::Constant(1, sign(x(0)) * y.squaredNorm());
  }
  Vec grad2_g(int i, const Vec& x, const Vec& y) const {
    return grad2_f(i, x, y) + 2.0 * std::abs(x(0)) * y;
  }
  Vec hess22_g(int, const Vec& x, const Vec&, const Vec& v) const {
    return (2.0 * feature_variance() + 2.0 * std::abs(x(0))) * v;
  }
  Vec jac12_g(int, const Vec& x, const Vec& y, const Vec& v) const {
    return Vec::Constant(1, 2.0 * sign(x(0)) * y.dot(v));
  }

  // streaming samples ---------------------------------------------------------

  Batch draw(int i, Rng& rng) const {
    Batch b{Mat(batch_, p_), Vec(batch_)};
    const double a = feature_half_width();
    std::uniform_real_distribution<double> unif(-a, a);
    for (int r = 0; r < batch_; ++r) {
      for (int k = 0; k < p_; ++k) b.features(r, k) = unif(rng);
    }
    b.labels = b.features * node_weight(i);
    for (int r = 0; r < batch_; ++r) b.labels(r) += standard_normal(rng);
    return b;
  }
  UpperSample draw_upper(int i, Rng& rng) const { return draw(i, rng); }
  LowerSample draw_lower(int i, Rng& rng) const { return draw(i, rng); }

  Vec grad1_F(int, const Vec&, const Vec&, const Batch&) const { return Vec::Zero(1); }
  Vec grad2_F(int, const Vec&, const Vec& y, const Batch& b) const {
    return (2.0 / batch_) * (b.features.transpose() * (b.features * y - b.labels));
  }
  Vec grad1_G(int i, const Vec& x, const Vec& y, const Batch&) const { return grad1_g(i, x, y); }
  Vec grad2_G(int i, const Vec& x, const Vec& y, const Batch& b) const {
    return grad2_F(i, x, y, b) + 2.0 * std::abs(x(0)) * y;
  }
  Vec hess22_G(int, const Vec& x, const Vec&, const Vec& v, const Batch& b) const {
    return (2.0 / batch_) * (b.features.transpose() * (b.features * v)) +
           2.0 * std::abs(x(0)) * v;
  }
  Vec jac12_G(int i, const Vec& x, const Vec& y, const Vec& v, const Batch&) const {
    return jac12_g(i, x, y, v);
  }

  // closed forms --------------------------------------------------------------

  Vec closed_form_y_star(const Vec& x) const {
    const double s = feature_variance();
    return (s / (s + std::abs(x(0)))) * mean_weight_;
  }

  /// min Phi is attained at x = 0, where y* is the mean node weight.
  std::optional<double> phi_star() const { return feature_variance() * spread_ + 1.0; }

  /// sign with sign(0) = 0 (subgradient choice for |x|).
  static double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

  /// Samples sup ||grad2 f(x, y*(x))|| and the worst stochastic-gradient
  /// variance over |x| <= radius, ||y|| <= radius. Diagnostics only.
  ProblemConstants estimate_constants(double radius, int points, int draws,
                                      std::uint64_t seed) const {
    ProblemConstants c = constants_;
    Rng rng(derive_seed(seed, 0xc0de));
    double lf = 0.0;
    double var = 0.0;
    for (int k = 0; k < points; ++k) {
      const Vec x = Vec::Constant(1, uniform(rng, -radius, radius));
      Vec y(p_);
      for (int j = 0; j < p_; ++j) y(j) = standard_normal(rng);
      y *= uniform(rng, 0.0, radius) / std::max(y.norm(), 1e-300);
      const int i = k % n_nodes();
      const Vec ys = closed_form_y_star(x);
      Vec mean_f = Vec::Zero(p_);
      for (int n = 0; n < n_nodes(); ++n) mean_f += grad2_f(n, x, ys);
      lf = std::max(lf, (mean_f / n_nodes()).norm());
      const Vec exact = grad2_g(i, x, y);
      double acc = 0.0;
      for (int r = 0; r < draws; ++r) acc += (grad2_G(i, x, y, draw(i, rng)) - exact).squaredNorm();
      var = std::max(var, acc / draws);
    }
    c.L_f = lf;
    c.sigma = std::sqrt(var);
    return c;
  }

 private:
  std::vector<Vec> weights_;
  int batch_ = 1;
  int p_ = 0;
  Vec mean_weight_;
  double spread_ = 0.0;
  ProblemConstants constants_;
};

inline RidgeTuningProblem make_ridge_tuning(const RidgeTuningSpec& spec, int n_nodes) {
  if (spec.dim < 1 || n_nodes < 1) {
    throw Error(ErrorCode::ValidationError, "ridge tuning needs dim >= 1 and n_nodes >= 1");
  }
  if (!(spec.heterogeneity >= 0.0)) {
    throw Error(ErrorCode::ValidationError, "heterogeneity must be >= 0");
  }
  Rng rng(derive_seed(spec.seed, 0x41d6e));
  Vec base(spec.dim);
  for (int k = 0; k < spec.dim; ++k) base(k) = uniform(rng, 0.0, 10.0);
  const double scale = std::sqrt(spec.heterogeneity);
  std::vector<Vec> weights;
  for (int i = 0; i < n_nodes; ++i) {
    Vec w = base;
    for (int k = 0; k < spec.dim; ++k) w(k) += scale * standard_normal(rng);
    weights.push_back(std::move(w));
  }
  return RidgeTuningProblem(std::move(weights), spec.batch);
}

}  // namespace dsoba
