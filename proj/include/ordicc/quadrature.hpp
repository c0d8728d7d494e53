#pragma once

#include <Eigen/Core>

namespace ordicc {

// Gauss-Hermite rule in probabilists' normalization: nodes z_q and weights
// w_q such that  sum_q w_q g(z_q)  approximates  E[g(Z)] with Z ~ N(0,1),
// exactly for polynomials of degree <= 2 n - 1. Weights sum to one.
//
// `adaptive` records how the rule is meant to be applied (recentred and
// rescaled per cluster at the integrand's mode); the nodes and weights
// themselves do not depend on it.
struct QuadratureRule {
  int n_nodes = 0;
  Eigen::VectorXd nodes;    // ascending
  Eigen::VectorXd weights;  // positive, sum 1
  bool adaptive = true;

  static QuadratureRule gauss_hermite(int n_nodes, bool adaptive = true);
};

}  // namespace ordicc
