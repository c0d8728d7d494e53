#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>

namespace ordicc {

// Smooth unconstrained objective to be minimized. value() may be called many
// times per accepted step (line search); value_and_gradient() only at
// accepted iterates.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual int dim() const = 0;
  virtual double value(const Eigen::VectorXd& x) = 0;
  virtual double value_and_gradient(const Eigen::VectorXd& x,
                                    Eigen::VectorXd& gradient) = 0;
};

struct OptimOptions {
  int max_iterations = 500;
  double grad_tol = 1e-6;      // inf-norm of the gradient
  double rel_f_tol = 1e-10;    // relative objective change per step
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd gradient;
  int n_iterations = 0;
  bool converged = false;
  std::string message;
};

// BFGS with inverse-Hessian updates and Armijo backtracking. Non-finite
// trial values are treated as rejected steps, so the iterates stay in the
// region where the objective is defined.
OptimResult minimize_bfgs(Objective& objective, const Eigen::VectorXd& x0,
                          const OptimOptions& options = {});

// Brent's method for a root of f on [a, b]; fa and fb must have opposite
// signs. Returns the abscissa once the bracket is narrower than xtol.
double brent_root(const std::function<double(double)>& f, double a, double b,
                  double fa, double fb, double xtol, int max_iterations = 200);

}  // namespace ordicc
