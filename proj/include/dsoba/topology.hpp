#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dsoba/error.hpp"
#include "dsoba/linalg.hpp"

namespace dsoba {

// ---------------------------------------------------------------------------
// Graph families
// ---------------------------------------------------------------------------

struct FullyConnected {};

/// Ring with explicit weights; self_weight + 2 * neighbor_weight must be 1.
struct Ring {
  double self_weight = 1.0 / 3.0;
  double neighbor_weight = 1.0 / 3.0;
};

/// Ring with 0.2 on the diagonal and 0.4 to each ring neighbor.
struct AdjustedRing {};

struct Torus2D {
  int rows = 0;
  int cols = 0;

  /// Most square factorization rows * cols = n with rows <= cols.
  static Torus2D near_square(int n) {
    int r = static_cast<int>(std::sqrt(static_cast<double>(n)));
    while (r > 1 && n % r != 0) --r;
    return Torus2D{r, n / r};
  }
};

/// Directed exponential graph: node i hears from (i + 2^k) mod n.
struct ExponentialGraph {};

using TopologyKind = std::variant<FullyConnected, Ring, AdjustedRing, Torus2D, ExponentialGraph>;

inline std::string topology_name(const TopologyKind& kind) {
  struct Visitor {
    std::string operator()(const FullyConnected&) const { return "full"; }
    std::string operator()(const Ring&) const { return "ring"; }
    std::string operator()(const AdjustedRing&) const { return "adjusted_ring"; }
    std::string operator()(const Torus2D& t) const {
      return "torus" + std::to_string(t.rows) + "x" + std::to_string(t.cols);
    }
    std::string operator()(const ExponentialGraph&) const { return "exponential"; }
  };
  return std::visit(Visitor{}, kind);
}

// ---------------------------------------------------------------------------
// Mixing matrix
// ---------------------------------------------------------------------------

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kCustomWeightTol = 1e-10;

/// Largest singular value of W - 11^T/n. Snaps to exactly 0 when W is the
/// averaging matrix.
inline double deviation_norm(const Mat& weights) {
  const auto n = weights.rows();
  const Mat deviation = weights - Mat::Constant(n, n, 1.0 / static_cast<double>(n));
  if (deviation.cwiseAbs().maxCoeff() <= kStochasticTol) return 0.0;
  Eigen::JacobiSVD<Mat> svd(deviation);
  return svd.singularValues()(0);
}

/// Doubly-stochastic gossip weights; weights(i, j) is what node i takes from
/// node j. Immutable once built.
class MixingMatrix {
 public:
  /// Validates row/column sums against `tol` and connectivity (rho < 1).
  static MixingMatrix from_weights(Mat weights, double tol = kCustomWeightTol) {
    if (weights.rows() != weights.cols() || weights.rows() < 1) {
      throw Error(ErrorCode::IncompatibleSize, "mixing matrix must be square and non-empty");
    }
    if (!weights.allFinite()) {
      throw Error(ErrorCode::NonStochasticWeights, "mixing matrix has non-finite entries");
    }
    const double row_err = (weights.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double col_err = (weights.colwise().sum().array() - 1.0).abs().maxCoeff();
    if (row_err > tol || col_err > tol) {
      std::ostringstream msg;
      msg << "row sum error " << row_err << ", column sum error " << col_err
          << " exceed tolerance " << tol;
      throw Error(ErrorCode::NonStochasticWeights, msg.str());
    }
    const double rho = deviation_norm(weights);
    if (!(rho < 1.0 - 1e-12)) {
      throw Error(ErrorCode::SpectralGapDegenerate,
                  "rho = " + std::to_string(rho) + " (graph disconnected or weights invalid)");
    }
    return MixingMatrix(std::move(weights), rho);
  }

  int n() const { return static_cast<int>(weights_.rows()); }
  const Mat& weights() const { return weights_; }
  double rho() const { return rho_; }
  double operator()(int i, int j) const { return weights_(i, j); }

  bool is_averaging() const { return rho_ == 0.0; }

 private:
  MixingMatrix(Mat weights, double rho) : weights_(std::move(weights)), rho_(rho) {}

  Mat weights_;
  double rho_ = 0.0;
};

namespace detail {

/// Metropolis weights on an undirected graph given as neighbor sets
/// (excluding self). Reduces to 1/(deg+1) on regular graphs.
inline Mat metropolis_weights(const std::vector<std::set<int>>& neighbors) {
  const int n = static_cast<int>(neighbors.size());
  Mat w = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j : neighbors[static_cast<std::size_t>(i)]) {
      const auto di = neighbors[static_cast<std::size_t>(i)].size();
      const auto dj = neighbors[static_cast<std::size_t>(j)].size();
      w(i, j) = 1.0 / (1.0 + static_cast<double>(std::max(di, dj)));
    }
    w(i, i) = 1.0 - w.row(i).sum();
  }
  return w;
}

inline std::vector<std::set<int>> ring_neighbors(int n) {
  std::vector<std::set<int>> nb(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nb[static_cast<std::size_t>(i)] = {(i + 1) % n, (i + n - 1) % n};
  }
  return nb;
}

inline void require_ring_size(int n, const char* family) {
  if (n < 3) {
    throw Error(ErrorCode::IncompatibleSize,
                std::string(family) + " needs n >= 3, got " + std::to_string(n));
  }
}

}  // namespace detail

inline MixingMatrix build_topology(const TopologyKind& kind, int n) {
  if (n < 1) throw Error(ErrorCode::IncompatibleSize, "node count must be >= 1");

  struct Builder {
    int n;

    Mat operator()(const FullyConnected&) const {
      return Mat::Constant(n, n, 1.0 / static_cast<double>(n));
    }

    Mat operator()(const Ring& ring) const {
      detail::require_ring_size(n, "Ring");
      if (ring.self_weight < 0.0 || ring.neighbor_weight < 0.0 ||
          std::abs(ring.self_weight + 2.0 * ring.neighbor_weight - 1.0) > kCustomWeightTol) {
        throw Error(ErrorCode::NonStochasticWeights,
                    "ring weights must be non-negative with self + 2 * neighbor = 1");
      }
      Mat w = Mat::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        w(i, i) = ring.self_weight;
        w(i, (i + 1) % n) = ring.neighbor_weight;
        w(i, (i + n - 1) % n) = ring.neighbor_weight;
      }
      return w;
    }

    Mat operator()(const AdjustedRing&) const {
      detail::require_ring_size(n, "AdjustedRing");
      return (*this)(Ring{0.2, 0.4});
    }

    Mat operator()(const Torus2D& torus) const {
      if (torus.rows < 1 || torus.cols < 1 || torus.rows * torus.cols != n) {
        throw Error(ErrorCode::IncompatibleSize,
                    "Torus2D " + std::to_string(torus.rows) + "x" + std::to_string(torus.cols) +
                        " does not cover n = " + std::to_string(n));
      }
      std::vector<std::set<int>> nb(static_cast<std::size_t>(n));
      const int r = torus.rows;
      const int c = torus.cols;
      for (int a = 0; a < r; ++a) {
        for (int b = 0; b < c; ++b) {
          const int i = a * c + b;
          auto& s = nb[static_cast<std::size_t>(i)];
          s.insert(((a + 1) % r) * c + b);
          s.insert(((a + r - 1) % r) * c + b);
          s.insert(a * c + (b + 1) % c);
          s.insert(a * c + (b + c - 1) % c);
          s.erase(i);
        }
      }
      return detail::metropolis_weights(nb);
    }

    Mat operator()(const ExponentialGraph&) const {
      std::set<int> offsets;
      for (long hop = 1; hop < n; hop *= 2) offsets.insert(static_cast<int>(hop));
      Mat w = Mat::Zero(n, n);
      const double weight = 1.0 / static_cast<double>(offsets.size() + 1);
      for (int i = 0; i < n; ++i) {
        w(i, i) = weight;
        for (int off : offsets) w(i, (i + off) % n) = weight;
      }
      return w;
    }
  };

  Mat w = std::visit(Builder{n}, kind);
  return MixingMatrix::from_weights(std::move(w), kStochasticTol);
}

/// 1 - rho. Throws SpectralGapDegenerate when rho >= 1.
inline double spectral_gap(const MixingMatrix& w) {
  if (!(w.rho() < 1.0)) {
    throw Error(ErrorCode::SpectralGapDegenerate, "rho >= 1");
  }
  return 1.0 - w.rho();
}

/// Spectral gap of raw weights, without the construction-time checks.
inline double spectral_gap(const Mat& weights) {
  const double rho = deviation_norm(weights);
  if (!(rho < 1.0 - 1e-12)) {
    throw Error(ErrorCode::SpectralGapDegenerate, "rho = " + std::to_string(rho));
  }
  return 1.0 - rho;
}

/// One gossip round: returns W * rows.
inline Mat mix(const MixingMatrix& w, const Mat& rows) {
  require_size(rows.rows(), w.n(), "mix input rows");
  if (w.is_averaging()) return replicate_mean(rows);
  return w.weights() * rows;
}

// ---------------------------------------------------------------------------
// Plain-text weights: first token n, then n*n reals, row-major.
// ---------------------------------------------------------------------------

inline MixingMatrix read_mixing_matrix(std::istream& in) {
  long n = 0;
  if (!(in >> n) || n < 1) {
    throw Error(ErrorCode::ParseError, "mixing matrix file: expected positive node count");
  }
  Mat w(n, n);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      if (!(in >> w(i, j))) {
        throw Error(ErrorCode::ParseError, "mixing matrix file: missing entry (" +
                                               std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  std::string trailing;
  if (in >> trailing) {
    throw Error(ErrorCode::ParseError, "mixing matrix file: trailing token '" + trailing + "'");
  }
  return MixingMatrix::from_weights(std::move(w), kCustomWeightTol);
}

inline MixingMatrix load_mixing_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open mixing matrix file " + path);
  return read_mixing_matrix(in);
}

inline void write_mixing_matrix(std::ostream& out, const MixingMatrix& w) {
  out << w.n() << '\n';
  out.precision(17);
  for (int i = 0; i < w.n(); ++i) {
    for (int j = 0; j < w.n(); ++j) {
      out << (j ? " " : "") << w(i, j);
    }
    out << '\n';
  }
}

}  // namespace dsoba
