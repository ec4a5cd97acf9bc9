#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/metrics.hpp"
#include "dsoba/oracles.hpp"
#include "dsoba/problem.hpp"
#include "dsoba/rng.hpp"
#include "dsoba/state.hpp"
#include "dsoba/topology.hpp"

namespace dsoba {

enum class Variant {
  SecondOrder,            // D-SOBA-SO
  FirstOrder,             // D-SOBA-FO
  Centralized,            // centralized SOBA with sampled products
  CentralizedFirstOrder,  // centralized SOBA with finite-difference products
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::SecondOrder: return "so";
    case Variant::FirstOrder: return "fo";
    case Variant::Centralized: return "centralized";
    case Variant::CentralizedFirstOrder: return "centralized_fo";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(const std::string& name) {
  for (Variant v : {Variant::SecondOrder, Variant::FirstOrder, Variant::Centralized,
                    Variant::CentralizedFirstOrder}) {
    if (name == variant_name(v)) return v;
  }
  return std::nullopt;
}

inline bool is_centralized(Variant v) {
  return v == Variant::Centralized || v == Variant::CentralizedFirstOrder;
}

inline bool uses_finite_differences(Variant v) {
  return v == Variant::FirstOrder || v == Variant::CentralizedFirstOrder;
}

/// alpha_t = alpha0 * factor^floor(t / period).
struct StageDecay {
  double factor = 1.0;
  long period = 1;
};

/// Step sizes follow beta = c1 alpha, gamma = c2 alpha, theta = c3 alpha.
/// With theta_follows_decay = false, theta stays at c3 * alpha0 while alpha
/// decays.
struct HyperParams {
  double alpha0 = 0.1;
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  bool theta_follows_decay = true;
  double tau = 1.0;
  std::optional<StageDecay> decay;
  DeltaConfig delta;
  Variant variant = Variant::SecondOrder;
  /// Clamp ||z_i|| to 10 L_f / mu_g when the problem knows L_f.
  bool clamp_z = false;

  double alpha(long t) const {
    if (!decay) return alpha0;
    return alpha0 * std::pow(decay->factor, static_cast<double>(t / decay->period));
  }
  double beta(long t) const { return c1 * alpha(t); }
  double gamma(long t) const { return c2 * alpha(t); }
  double theta(long t) const { return c3 * (theta_follows_decay ? alpha(t) : alpha0); }

  void validate() const {
    auto fail = [](const char* key, const std::string& why) {
      throw ConfigError(ErrorCode::ValidationError, key, why);
    };
    if (!(alpha0 >= 0.0) || !std::isfinite(alpha0)) fail("alpha", "must be finite and >= 0");
    if (!(c1 > 0.0)) fail("c1", "must be > 0");
    if (!(c2 > 0.0)) fail("c2", "must be > 0");
    if (!(c3 > 0.0)) fail("c3", "must be > 0");
    if (!(tau > 0.0)) fail("tau", "must be > 0");
    if (decay) {
      if (!(decay->factor > 0.0 && decay->factor <= 1.0)) fail("decay_factor", "must be in (0, 1]");
      if (decay->period < 1) fail("decay_period", "must be >= 1");
    }
    if (!delta.adaptive && !(delta.fixed > 0.0)) fail("delta", "must be > 0");
    if (delta.adaptive && !(delta.max_delta > 0.0 && delta.target_bias > 0.0 &&
                            delta.hessian_lipschitz > 0.0)) {
      fail("delta", "adaptive schedule needs positive max, target and Lipschitz constant");
    }
    if (!(theta(0) <= 1.0)) fail("c3", "theta must not exceed 1");
  }
};

/// Initial iterates. Zero by default; `scale > 0` draws every entry of
/// X, Y, Z, H from N(0, scale^2) using a stream separate from the node streams.
struct InitSpec {
  double scale = 0.0;
  std::optional<Vec> x0;  // replicated to every node when set
  std::optional<Vec> y0;
  std::optional<Vec> z0;
};

inline constexpr double kDivergenceThreshold = 1e12;

template <BilevelProblem P>
SwarmState init(const P& problem, const MixingMatrix& w, const HyperParams& hyper,
                std::uint64_t seed, const InitSpec& spec = {}) {
  if (problem.n_nodes() != w.n()) {
    throw Error(ErrorCode::ConfigMismatch, "problem has " + std::to_string(problem.n_nodes()) +
                                               " nodes but mixing matrix has " +
                                               std::to_string(w.n()));
  }
  hyper.validate();
  const int n = w.n();
  const int d = problem.dim_x();
  const int p = problem.dim_y();
  SwarmState s;
  s.t = 0;
  s.X = Mat::Zero(n, d);
  s.Y = Mat::Zero(n, p);
  s.Z = Mat::Zero(n, p);
  s.H = Mat::Zero(n, d);
  if (spec.scale > 0.0) {
    Rng rng(derive_seed(seed, 0x1417));
    for (Mat* m : {&s.X, &s.Y, &s.Z, &s.H}) {
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = spec.scale * standard_normal(rng);
    }
  }
  auto replicate = [n](const std::optional<Vec>& v, Mat& target, const char* what) {
    if (!v) return;
    require_size(v->size(), target.cols(), what);
    target = v->transpose().replicate(n, 1);
  };
  replicate(spec.x0, s.X, "initial x");
  replicate(spec.y0, s.Y, "initial y");
  replicate(spec.z0, s.Z, "initial z");
  s.streams = make_node_streams(seed, n);
  return s;
}

namespace detail {

inline void check_divergence(const SwarmState& s) {
  for (const Mat* m : {&s.X, &s.Y, &s.Z, &s.H}) {
    if (!m->allFinite()) throw DivergenceError(s.t, "non-finite iterate");
    if (m->size() && m->cwiseAbs().maxCoeff() > kDivergenceThreshold) {
      throw DivergenceError(s.t, "iterate magnitude exceeds 1e12");
    }
  }
}

inline Vec row(const Mat& m, int i) { return m.row(i).transpose(); }

}  // namespace detail

/// One synchronous iteration. Every node reads only iteration-t values and
/// draws one upper and one lower sample from its own stream (upper first).
template <BilevelProblem P>
SwarmState step(const P& problem, const MixingMatrix& w, const HyperParams& hyper,
                SwarmState state) {
  using detail::row;
  const long t = state.t;
  const int n = state.n();
  if (n != w.n() || n != problem.n_nodes()) {
    throw Error(ErrorCode::ConfigMismatch, "state, problem and mixing matrix disagree on n");
  }
  const double alpha = hyper.alpha(t);
  const double beta = hyper.beta(t);
  const double gamma = hyper.gamma(t);
  const double theta = hyper.theta(t);
  const bool central = is_centralized(hyper.variant);
  const bool fd = uses_finite_differences(hyper.variant);

  // Centralized SOBA keeps one iterate; evaluate every node at the mean.
  const Vec xc = central ? state.x_bar() : Vec();
  const Vec yc = central ? state.y_bar() : Vec();
  const Vec zc = central ? state.z_bar() : Vec();

  Mat dir_y(n, problem.dim_y());
  Mat dir_z(n, problem.dim_y());
  Mat omega(n, problem.dim_x());
  for (int i = 0; i < n; ++i) {
    const Vec x = central ? xc : row(state.X, i);
    const Vec y = central ? yc : row(state.Y, i);
    const Vec z = central ? zc : row(state.Z, i);
    auto& rng = state.streams[static_cast<std::size_t>(i)];
    const auto xi = problem.draw_upper(i, rng);
    const auto zeta = problem.draw_lower(i, rng);
    const HvpPair hvp = fd ? hvp_fo(problem, i, x, y, z, hyper.delta.at(z), zeta)
                           : hvp_so(problem, i, x, y, z, zeta);
    dir_y.row(i) = problem.grad2_G(i, x, y, zeta).transpose();
    dir_z.row(i) = (hvp.p_H - problem.grad2_F(i, x, y, xi)).transpose();
    omega.row(i) = (problem.grad1_F(i, x, y, xi) - hvp.p_J).transpose();
  }

  SwarmState next;
  next.t = t + 1;
  next.streams = std::move(state.streams);
  if (central) {
    const Eigen::RowVectorXd h_bar = state.H.colwise().mean();
    const Eigen::RowVectorXd x_new = xc.transpose() - hyper.tau * alpha * h_bar;
    const Eigen::RowVectorXd y_new = yc.transpose() - beta * dir_y.colwise().mean();
    const Eigen::RowVectorXd z_new = zc.transpose() - gamma * dir_z.colwise().mean();
    const Eigen::RowVectorXd h_new = (1.0 - theta) * h_bar + theta * omega.colwise().mean();
    next.X = x_new.replicate(n, 1);
    next.Y = y_new.replicate(n, 1);
    next.Z = z_new.replicate(n, 1);
    next.H = h_new.replicate(n, 1);
  } else {
    next.X = mix(w, state.X - hyper.tau * alpha * state.H);
    next.Y = mix(w, state.Y - beta * dir_y);
    next.Z = mix(w, state.Z - gamma * dir_z);
    next.H = (1.0 - theta) * state.H + theta * omega;
  }

  if (hyper.clamp_z && problem.constants().L_f && problem.constants().mu_g > 0.0) {
    const double radius = 10.0 * *problem.constants().L_f / problem.constants().mu_g;
    for (int i = 0; i < n; ++i) {
      const double norm = next.Z.row(i).norm();
      if (norm > radius) next.Z.row(i) *= radius / norm;
    }
  }
  detail::check_divergence(next);
  return next;
}

struct ProbeSpec {
  long every = 1;
  /// Stops the run with WallClockLimit once exceeded (0 = unlimited).
  double wall_seconds = 0.0;
};

/// Runs T iterations, filling `record` as it goes so a divergence leaves the
/// probes recorded so far. Probes at t = 0, every `probe.every` iterations,
/// and at T.
template <BilevelProblem P>
void run_into(const P& problem, const MixingMatrix& w, const HyperParams& hyper, long T,
              std::uint64_t seed, const ProbeSpec& probe, RunRecord& record,
              const InitSpec& init_spec = {}) {
  if (T < 0) throw Error(ErrorCode::ValidationError, "iteration count must be >= 0");
  if (probe.every < 1) throw Error(ErrorCode::ValidationError, "probe interval must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  SwarmState state = init(problem, w, hyper, seed, init_spec);
  record.meta.run_seed = seed;
  record.meta.variant = variant_name(hyper.variant);
  record.meta.n = w.n();
  record.meta.d = problem.dim_x();
  record.meta.p = problem.dim_y();
  record.probes.clear();
  record.probes.push_back(measure(problem, state, hyper.alpha(0)));
  for (long t = 0; t < T; ++t) {
    state = step(problem, w, hyper, std::move(state));
    if (state.t % probe.every == 0 || state.t == T) {
      record.probes.push_back(measure(problem, state, hyper.alpha(state.t)));
      if (probe.wall_seconds > 0.0) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        if (elapsed.count() > probe.wall_seconds) {
          throw Error(ErrorCode::WallClockLimit,
                      "run exceeded " + std::to_string(probe.wall_seconds) + " s at iteration " +
                          std::to_string(state.t));
        }
      }
    }
  }
}

template <BilevelProblem P>
RunRecord run(const P& problem, const MixingMatrix& w, const HyperParams& hyper, long T,
              std::uint64_t seed, const ProbeSpec& probe = {}, const InitSpec& init_spec = {}) {
  if (T < 1) throw Error(ErrorCode::ValidationError, "run needs T >= 1");
  RunRecord record;
  run_into(problem, w, hyper, T, seed, probe, record, init_spec);
  return record;
}

}  // namespace dsoba
