#include "ordicc/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "ordicc/errors.hpp"

namespace ordicc {

// Golub-Welsch: the probabilists' Hermite three-term recurrence has zero
// diagonal and off-diagonal sqrt(k), so nodes are eigenvalues of that
// symmetric tridiagonal matrix and weights are the squared first components
// of the normalized eigenvectors (mu_0 = 1, hence weights sum to one).
QuadratureRule QuadratureRule::gauss_hermite(int n_nodes, bool adaptive) {
  if (n_nodes < 1) {
    throw InvalidInputError("gauss_hermite: need at least one node");
  }

  QuadratureRule rule;
  rule.n_nodes = n_nodes;
  rule.adaptive = adaptive;

  if (n_nodes == 1) {
    rule.nodes = Eigen::VectorXd::Zero(1);
    rule.weights = Eigen::VectorXd::Ones(1);
    return rule;
  }

  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (int k = 1; k < n_nodes; ++k) {
    const double off = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  rule.nodes = solver.eigenvalues();  // ascending
  rule.weights.resize(n_nodes);
  for (int q = 0; q < n_nodes; ++q) {
    const double first = solver.eigenvectors()(0, q);
    rule.weights[q] = first * first;
  }
  // Enforce exact symmetry of the rule; the eigensolver is symmetric only to
  // rounding.
  for (int q = 0; q < n_nodes / 2; ++q) {
    const int mirror = n_nodes - 1 - q;
    const double node = 0.5 * (rule.nodes[mirror] - rule.nodes[q]);
    rule.nodes[q] = -node;
    rule.nodes[mirror] = node;
    const double weight = 0.5 * (rule.weights[q] + rule.weights[mirror]);
    rule.weights[q] = weight;
    rule.weights[mirror] = weight;
  }
  if (n_nodes % 2 == 1) rule.nodes[n_nodes / 2] = 0.0;
  rule.weights /= rule.weights.sum();
  return rule;
}

}  // namespace ordicc
