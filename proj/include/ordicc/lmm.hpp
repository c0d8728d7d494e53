#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

#include "ordicc/dataset.hpp"
#include "ordicc/optimize.hpp"

namespace ordicc {

struct LmmOptions {
  // Numeric response assigned to category k (1-based); defaults to the codes
  // 1..K themselves.
  std::optional<Eigen::VectorXd> code_values;
  OptimOptions optim{.max_iterations = 500, .grad_tol = 1e-6,
                     .rel_f_tol = 1e-11};
  bool compute_vcov = true;
  double vcov_step = 1e-4;  // relative step for the variance-component information
};

// Maximum-likelihood linear mixed model on the numeric category codes: the
// "naive" analysis. Fixed effects are an intercept plus the dataset
// covariates; random intercepts per cluster (and per ear for nested data).
struct LmmFit {
  Eigen::VectorXd beta_hat;  // intercept first, then covariates
  double sigma_b_sq = 0.0;
  std::optional<double> sigma_c_sq;  // engaged for nested data
  double sigma_eps_sq = 0.0;
  double loglik = 0.0;
  // covariance of (sigma_b_sq [, sigma_c_sq], sigma_eps_sq)
  Eigen::MatrixXd vcov_varcomp;
  bool vcov_available = false;
  bool converged = false;
  bool boundary_sigma_b = false;
  bool boundary_sigma_c = false;
  int n_iterations = 0;
  int n_obs = 0;
  int n_clusters = 0;
  int n_ears = 0;  // 0 for single-level data
  std::string message;
};

LmmFit fit_lmm(const OrdinalDataset& data, const LmmOptions& options = {});

// Profiled (over fixed effects) ML log likelihood at the given variance
// components; exposed for grid-scan style checks.
double lmm_profile_loglik(const OrdinalDataset& data,
                          const Eigen::VectorXd& variance_components,
                          const LmmOptions& options = {});

}  // namespace ordicc
