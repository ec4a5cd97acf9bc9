#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"
#include "dsoba/problem.hpp"
#include "dsoba/state.hpp"

namespace dsoba {

struct Probe {
  long t = 0;
  double grad_sq_norm = 0.0;    // ||grad Phi(x_bar)||^2
  double phi_gap = 0.0;         // upper_loss - Phi*, NaN when Phi* is unknown
  double consensus_error = 0.0;
  double upper_loss = 0.0;      // (1/n) sum_i f(x_i, y_i)
  double alpha = 0.0;           // step size in effect at t
};

enum class Metric { GradSqNorm, PhiGap, ConsensusError, UpperLoss };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::GradSqNorm: return "grad_sq_norm";
    case Metric::PhiGap: return "phi_gap";
    case Metric::ConsensusError: return "consensus_error";
    case Metric::UpperLoss: return "upper_loss";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(const std::string& name) {
  for (Metric m : {Metric::GradSqNorm, Metric::PhiGap, Metric::ConsensusError, Metric::UpperLoss}) {
    if (name == metric_name(m)) return m;
  }
  return std::nullopt;
}

inline double metric_value(const Probe& p, Metric m) {
  switch (m) {
    case Metric::GradSqNorm: return p.grad_sq_norm;
    case Metric::PhiGap: return p.phi_gap;
    case Metric::ConsensusError: return p.consensus_error;
    case Metric::UpperLoss: return p.upper_loss;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

struct RunMetadata {
  std::string config_hash;
  std::uint64_t problem_seed = 0;
  std::uint64_t run_seed = 0;
  std::string topology;
  std::string variant;
  int trial = 0;
  int n = 0;
  int d = 0;
  int p = 0;
};

/// Metric trajectory of one run; probe iterations strictly increase.
struct RunRecord {
  RunMetadata meta;
  std::vector<Probe> probes;

  std::vector<long> grid() const {
    std::vector<long> t;
    t.reserve(probes.size());
    for (const auto& p : probes) t.push_back(p.t);
    return t;
  }
  std::vector<double> series(Metric m) const {
    std::vector<double> v;
    v.reserve(probes.size());
    for (const auto& p : probes) v.push_back(metric_value(p, m));
    return v;
  }
};

// ---------------------------------------------------------------------------
// Per-state metrics
// ---------------------------------------------------------------------------

/// (||X - Xbar||_F^2 + ||Y - Ybar||_F^2 + ||Z - Zbar||_F^2) / n
inline double consensus_error(const SwarmState& s) {
  const double n = static_cast<double>(s.n());
  return ((s.X - replicate_mean(s.X)).squaredNorm() + (s.Y - replicate_mean(s.Y)).squaredNorm() +
          (s.Z - replicate_mean(s.Z)).squaredNorm()) /
         n;
}

/// ||grad Phi(x_bar)||^2
template <BilevelProblem P>
double hypergrad_sq_norm(const P& problem, const SwarmState& s) {
  return hypergradient_exact(problem, s.x_bar()).squaredNorm();
}

/// Global upper objective averaged over the node iterates.
template <BilevelProblem P>
double upper_loss(const P& problem, const SwarmState& s) {
  double acc = 0.0;
  for (int i = 0; i < s.n(); ++i) {
    acc += global_f(problem, Vec(s.X.row(i).transpose()), Vec(s.Y.row(i).transpose()));
  }
  return acc / s.n();
}

template <BilevelProblem P>
Probe measure(const P& problem, const SwarmState& s, double alpha) {
  Probe p;
  p.t = s.t;
  p.grad_sq_norm = hypergrad_sq_norm(problem, s);
  p.consensus_error = consensus_error(s);
  p.upper_loss = upper_loss(problem, s);
  const auto star = phi_star(problem);
  p.phi_gap = star ? p.upper_loss - *star : std::numeric_limits<double>::quiet_NaN();
  p.alpha = alpha;
  return p;
}

// ---------------------------------------------------------------------------
// Transient cutoff
// ---------------------------------------------------------------------------

struct TransientEstimate {
  long cutoff_iteration = 0;
  double rel_tol = 0.0;
  int window = 1;
  bool matched = false;
};

/// Trailing-window median: out[k] = median(v[max(0, k-w+1) .. k]).
inline std::vector<double> trailing_median(const std::vector<double>& v, int window) {
  const auto w = static_cast<std::size_t>(std::max(window, 1));
  std::vector<double> out(v.size());
  std::vector<double> buf;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::size_t lo = k + 1 >= w ? k + 1 - w : 0;
    buf.assign(v.begin() + static_cast<std::ptrdiff_t>(lo),
               v.begin() + static_cast<std::ptrdiff_t>(k + 1));
    std::sort(buf.begin(), buf.end());
    const std::size_t m = buf.size();
    out[k] = m % 2 ? buf[m / 2] : 0.5 * (buf[m / 2 - 1] + buf[m / 2]);
  }
  return out;
}

/// Smallest probe iteration from which the smoothed decentralized metric
/// stays within (1 + rel_tol) of the smoothed centralized metric.
inline TransientEstimate transient_cutoff(const RunRecord& decentralized,
                                          const RunRecord& centralized, double rel_tol,
                                          int window, Metric metric = Metric::GradSqNorm) {
  if (decentralized.grid() != centralized.grid()) {
    throw Error(ErrorCode::GridMismatch, "records are probed on different iteration grids");
  }
  if (decentralized.probes.empty()) throw Error(ErrorCode::EmptyInput, "records have no probes");
  for (const RunRecord* r : {&decentralized, &centralized}) {
    for (const auto& p : r->probes) {
      if (std::isnan(metric_value(p, metric))) {
        throw Error(ErrorCode::ValidationError,
                    std::string("metric ") + metric_name(metric) + " is not available");
      }
    }
  }
  const auto dec = trailing_median(decentralized.series(metric), window);
  const auto cen = trailing_median(centralized.series(metric), window);
  TransientEstimate est;
  est.rel_tol = rel_tol;
  est.window = window;
  std::size_t first_ok = dec.size();
  for (std::size_t k = dec.size(); k-- > 0;) {
    if (dec[k] <= (1.0 + rel_tol) * cen[k]) {
      first_ok = k;
    } else {
      break;
    }
  }
  est.matched = first_ok < dec.size();
  est.cutoff_iteration = est.matched ? decentralized.probes[first_ok].t
                                     : decentralized.probes.back().t;
  return est;
}

/// Cutoff with unmatched runs ranked after every matched one.
inline long effective_cutoff(const TransientEstimate& e) {
  return e.matched ? e.cutoff_iteration : std::numeric_limits<long>::max();
}

// ---------------------------------------------------------------------------
// Aggregation across seeds
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string topology;
  std::string variant;
  long t = 0;
  int count = 0;
  std::map<Metric, double> mean;
  std::map<Metric, double> std_error;
};

/// Mean and standard error of each metric at each probe, grouped by
/// (topology, variant). Rows sorted by group then t.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "summarize needs at least one record");
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) groups[{r.meta.topology, r.meta.variant}].push_back(&r);

  const Metric metrics[] = {Metric::GradSqNorm, Metric::PhiGap, Metric::ConsensusError,
                            Metric::UpperLoss};
  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : groups) {
    const auto grid = members.front()->grid();
    for (const auto* m : members) {
      if (m->grid() != grid) {
        throw Error(ErrorCode::GridMismatch, "records of " + key.first + "/" + key.second +
                                                 " use different probe grids");
      }
    }
    const double k = static_cast<double>(members.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
      SummaryRow row{key.first, key.second, grid[j], static_cast<int>(members.size()), {}, {}};
      for (Metric metric : metrics) {
        // sort so the result does not depend on record order
        std::vector<double> vals;
        for (const auto* m : members) vals.push_back(metric_value(m->probes[j], metric));
        if (std::any_of(vals.begin(), vals.end(), [](double v) { return std::isnan(v); })) {
          row.mean[metric] = std::numeric_limits<double>::quiet_NaN();
          row.std_error[metric] = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        std::sort(vals.begin(), vals.end());
        if (vals.front() == vals.back()) {
          row.mean[metric] = vals.front();
          row.std_error[metric] = 0.0;
          continue;
        }
        double sum = 0.0;
        for (double v : vals) sum += v;
        const double mean = sum / k;
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        row.mean[metric] = mean;
        row.std_error[metric] = members.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace dsoba
