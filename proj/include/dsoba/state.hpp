#pragma once

#include <vector>

#include "dsoba/linalg.hpp"
#include "dsoba/rng.hpp"

namespace dsoba {

/// Per-node iterates at iteration t; row i of each matrix belongs to node i.
/// Each node owns one random stream.
struct SwarmState {
  long t = 0;
  Mat X;  // n x d
  Mat Y;  // n x p
  Mat Z;  // n x p
  Mat H;  // n x d, moving-average hypergradient estimates
  std::vector<Rng> streams;

  int n() const { return static_cast<int>(X.rows()); }
  Vec x_bar() const { return X.colwise().mean().transpose(); }
  Vec y_bar() const { return Y.colwise().mean().transpose(); }
  Vec z_bar() const { return Z.colwise().mean().transpose(); }
  Vec h_bar() const { return H.colwise().mean().transpose(); }
};

}  // namespace dsoba
