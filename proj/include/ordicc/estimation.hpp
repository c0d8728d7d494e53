#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "ordicc/dataset.hpp"
#include "ordicc/likelihood.hpp"
#include "ordicc/optimize.hpp"
#include "ordicc/quadrature.hpp"

namespace ordicc {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct FitOptions {
  int n_quadrature = 15;
  bool adaptive = true;
  OptimOptions optim{};
  // Hessian of the working-parameter log likelihood (for Wald machinery).
  bool compute_vcov = true;
  double hessian_step = 1e-4;
  // Optional replacement for the data-driven starting values.
  std::optional<Eigen::VectorXd> start;
};

struct ClmmFit {
  ThresholdSet thresholds;
  Eigen::VectorXd beta;
  double sigma_b = 0.0;
  std::optional<double> sigma_c;
  double loglik = 0.0;
  Eigen::VectorXd theta;         // working parameters at the optimum
  Eigen::MatrixXd vcov_working;  // inverse observed information, working scale
  bool vcov_available = false;
  bool converged = false;
  int n_iterations = 0;
  Link link = Link::probit;
  bool nested = false;
  int n_obs = 0;
  int n_clusters = 0;
  int n_ears = 0;
  std::string gradient_method;
  std::string message;
};

ClmmFit fit_clmm(const OrdinalDataset& data, Link link,
                 const FitOptions& options = {});

// Profile log likelihood at a fixed sigma_b^2: all remaining parameters
// re-optimized. Throws LikelihoodEvalError when the inner fit fails to
// converge (the message names the fixed value).
double profile_loglik_sigma_b(const OrdinalDataset& data, Link link,
                              double sigma_b_sq,
                              const FitOptions& options = {});

struct ProfileCi {
  Interval interval;           // on the sigma_b^2 scale
  bool lower_at_zero = false;  // likelihood-ratio test keeps sigma_b^2 = 0
  bool available = false;      // false when a root could not be bracketed
  std::string message;
};

ProfileCi profile_ci_sigma_b(const OrdinalDataset& data, Link link,
                             const ClmmFit& fit, double level = 0.95,
                             const FitOptions& options = {});

}  // namespace ordicc
