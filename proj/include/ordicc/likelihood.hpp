#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ordicc/dataset.hpp"
#include "ordicc/distributions.hpp"
#include "ordicc/dual.hpp"
#include "ordicc/optimize.hpp"
#include "ordicc/quadrature.hpp"

namespace ordicc {

// Cumulative-link mixed model on the working scale (residual scale fixed by
// the link): P(Y <= k | z) = F(xi_k - x'beta - sigma_b z [- sigma_c z_c]).
struct ClmmParams {
  ThresholdSet thresholds;
  Eigen::VectorXd beta;
  double log_sigma_b = 0.0;
  std::optional<double> log_sigma_c;  // engaged for subject/ear nesting
  Link link = Link::probit;

  double sigma_b_sq() const { return std::exp(2.0 * log_sigma_b); }
  std::optional<double> sigma_c_sq() const {
    if (!log_sigma_c) return std::nullopt;
    return std::exp(2.0 * *log_sigma_c);
  }
};

// Probability that the outcome falls in category `k` (1-based) given the
// total linear predictor `eta` and strictly increasing thresholds `xi`
// (K - 1 of them). Complementary CDFs are used in the tails so neighbouring
// categories never cancel catastrophically. Generic over the scalar type so
// the same expression drives values and forward-mode derivatives.
template <class T>
T cell_prob(int k, const T& eta, std::span<const T> xi, Link link) {
  const int n_categories = static_cast<int>(xi.size()) + 1;
  if (k == 1) return link_cdf(link, T(xi[0] - eta));
  if (k == n_categories) return link_sf(link, T(xi[k - 2] - eta));
  const T lo = xi[k - 2] - eta;
  const T hi = xi[k - 1] - eta;
  if (val(lo) > 0.0) return link_sf(link, lo) - link_sf(link, hi);
  return link_cdf(link, hi) - link_cdf(link, lo);
}

double cell_prob(int k, double eta, const ThresholdSet& thresholds, Link link);

// Floor applied to cell probabilities before taking logs.
inline constexpr double kProbFloor = 1e-300;

// ---- working parameter vector ----
//
// theta = ( xi_1, log(xi_2 - xi_1), ..., log(xi_{K-1} - xi_{K-2}),
//           beta_1 .. beta_p, log sigma_b [, log sigma_c] )
//
// The log-increment encoding keeps thresholds ordered for any real theta.

Eigen::VectorXd pack_working(const ClmmParams& params);
ClmmParams unpack_working(const Eigen::VectorXd& theta, int n_categories,
                          int n_covariates, bool nested, Link link);

// ---- marginal log likelihood ----
//
// Integrals over the random effects are evaluated by Gauss-Hermite
// quadrature; with rule.adaptive the rule is recentred at the mode of each
// cluster's integrand and rescaled by its curvature. Nested models use a
// one-dimensional inner rule per ear conditional on the subject effect and
// an outer rule per subject, the outer adaptation taken from the joint mode
// of (z_b, z_c1..z_cE) with the ear block condensed by a Schur complement.
//
// All three entry points throw InvalidInputError on shape mismatches and
// LikelihoodEvalError (carrying the cluster id) if any cluster contribution
// is non-finite.

double loglik_single(const ClmmParams& params, const OrdinalDataset& data,
                     const QuadratureRule& rule);
double loglik_nested(const ClmmParams& params, const OrdinalDataset& data,
                     const QuadratureRule& rule);

// Gradient of the log likelihood with respect to the working parameter
// vector, computed with forward-mode dual numbers through the same adaptive
// quadrature (mode searches included, via an implicit-function settle step).
Eigen::VectorXd loglik_gradient(const ClmmParams& params,
                                const OrdinalDataset& data,
                                const QuadratureRule& rule);

// Cluster-contiguous observation layout used by the likelihood internals.
struct ObsSpan {
  int begin = 0;
  int end = 0;
};
struct PackedCluster {
  ObsSpan obs;
  std::string id;
  std::vector<ObsSpan> ears;  // empty for single-level data
};

// Negative marginal log likelihood over the working parameter vector, with
// per-cluster mode caches that persist across evaluations (warm starts).
// With fixed_sigma_b_sq engaged the working vector omits the log sigma_b
// entry and sigma_b is held at sqrt(fixed_sigma_b_sq); that is the profiling
// objective.
class ClmmObjective final : public Objective {
 public:
  ClmmObjective(const OrdinalDataset& data, Link link, QuadratureRule rule,
                std::optional<double> fixed_sigma_b_sq = std::nullopt);

  // Move the profiling constraint; only valid on an objective constructed
  // with a fixed sigma_b^2 (keeps dim() stable and mode caches warm).
  void set_fixed_sigma_b_sq(double sigma_b_sq);

  int dim() const override;
  double value(const Eigen::VectorXd& theta) override;
  double value_and_gradient(const Eigen::VectorXd& theta,
                            Eigen::VectorXd& gradient) override;

  // Log likelihood (not negated); throws on non-finite contributions.
  double loglik_checked(const Eigen::VectorXd& theta);
  Eigen::VectorXd loglik_gradient_checked(const Eigen::VectorXd& theta);

  // Thresholds from empirical cumulative frequencies through the inverse
  // link, beta = 0, log sigmas = 0.
  Eigen::VectorXd starting_values() const;

  ClmmParams params_from(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd theta_from(const ClmmParams& params) const;

  int n_categories() const { return n_categories_; }
  int n_covariates() const { return n_covariates_; }
  int n_clusters() const { return static_cast<int>(clusters_.size()); }
  int n_ears() const;
  int n_obs() const { return static_cast<int>(category_.size()); }
  bool nested() const { return nested_; }
  Link link() const { return link_; }
  const QuadratureRule& rule() const { return rule_; }
  const char* gradient_method() const;

 private:
  template <class T>
  double accumulate(const Eigen::VectorXd& theta, bool settle_only,
                    Eigen::VectorXd* gradient_out, bool checked);

  Link link_;
  bool nested_ = false;
  int n_categories_ = 0;
  int n_covariates_ = 0;
  std::optional<double> fixed_sigma_b_sq_;
  QuadratureRule rule_;
  Eigen::VectorXd log_w_adj_;  // log w_q + log sqrt(2 pi) + z_q^2 / 2

  std::vector<int> category_;  // packed cluster-contiguous
  Eigen::MatrixXd x_;          // packed rows matching category_
  std::vector<PackedCluster> clusters_;
  Eigen::VectorXd start_;

  // mode caches, indexed like clusters_
  std::vector<double> mode_single_;
  std::vector<Eigen::VectorXd> mode_joint_;  // (z_b, z_c per ear)
  std::vector<Eigen::MatrixXd> mode_inner_;  // ears x outer nodes
};

}  // namespace ordicc
