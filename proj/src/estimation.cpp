#include "ordicc/estimation.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "ordicc/distributions.hpp"
#include "ordicc/errors.hpp"

namespace ordicc {
namespace {

constexpr double kDegenerateVarianceGuard = 1e4;
constexpr double kProfileUpperWindow = 1e6;

// Observed information = Hessian of the negative log likelihood, by central
// differences of the gradient. NaN-filled on any non-finite evaluation.
Eigen::MatrixXd fd_information(ClmmObjective& objective,
                               const Eigen::VectorXd& theta, double rel_step) {
  const int dim = objective.dim();
  Eigen::MatrixXd info(dim, dim);
  Eigen::VectorXd g_hi(dim), g_lo(dim);
  for (int j = 0; j < dim; ++j) {
    const double step = rel_step * std::max(1.0, std::abs(theta[j]));
    Eigen::VectorXd hi = theta, lo = theta;
    hi[j] += step;
    lo[j] -= step;
    const double f_hi = objective.value_and_gradient(hi, g_hi);
    const double f_lo = objective.value_and_gradient(lo, g_lo);
    if (!std::isfinite(f_hi) || !std::isfinite(f_lo) || !g_hi.allFinite() ||
        !g_lo.allFinite()) {
      info.setConstant(std::numeric_limits<double>::quiet_NaN());
      return info;
    }
    info.col(j) = (g_hi - g_lo) / (2.0 * step);
  }
  return 0.5 * (info + info.transpose()).eval();
}

// Re-optimizes the nuisance parameters at each fixed sigma_b^2, warm-started
// from the previous optimum (the objective keeps its mode caches too).
class ProfileEvaluator {
 public:
  ProfileEvaluator(const OrdinalDataset& data, Link link,
                   const FitOptions& options, double sigma_b_sq_start,
                   const Eigen::VectorXd& theta_full)
      : objective_(data, link,
                   QuadratureRule::gauss_hermite(options.n_quadrature, options.adaptive),
                   sigma_b_sq_start),
        optim_(options.optim) {
    // Drop the log sigma_b coordinate from the full-fit optimum.
    const int k = objective_.n_categories();
    const int p = objective_.n_covariates();
    Eigen::VectorXd seed(objective_.dim());
    seed.head(k - 1 + p) = theta_full.head(k - 1 + p);
    visited_.emplace_back(sigma_b_sq_start, std::move(seed));
  }

  double operator()(double sigma_b_sq) {
    objective_.set_fixed_sigma_b_sq(sigma_b_sq);
    // Root bracketing jumps around, so warm-start from the nuisance optimum
    // of the nearest sigma_b_sq evaluated so far rather than the last one.
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < visited_.size(); ++i) {
      if (std::fabs(visited_[i].first - sigma_b_sq) <
          std::fabs(visited_[nearest].first - sigma_b_sq)) {
        nearest = i;
      }
    }
    const OptimResult res =
        minimize_bfgs(objective_, visited_[nearest].second, optim_);
    // Root polishing asks for sigma_b_sq values closer together than the
    // optimizer can resolve in f; a near-stationary end point is fine there
    // because the profile value is off by only O(|gradient|^2).
    const bool near_stationary =
        std::isfinite(res.f) &&
        res.gradient.lpNorm<Eigen::Infinity>() < 1e-4;
    if (!res.converged && !near_stationary) {
      std::ostringstream msg;
      msg << "profile fit did not converge at sigma_b_sq = " << sigma_b_sq;
      throw LikelihoodEvalError(msg.str(), "");
    }
    visited_.emplace_back(sigma_b_sq, res.x);
    return -res.f;
  }

 private:
  ClmmObjective objective_;
  OptimOptions optim_;
  std::vector<std::pair<double, Eigen::VectorXd>> visited_;
};

}  // namespace

ClmmFit fit_clmm(const OrdinalDataset& data, Link link,
                 const FitOptions& options) {
  ClmmObjective objective(
      data, link, QuadratureRule::gauss_hermite(options.n_quadrature, options.adaptive));
  Eigen::VectorXd theta0 = objective.starting_values();
  if (options.start) {
    if (options.start->size() != theta0.size() || !options.start->allFinite()) {
      throw InvalidInputError("fit_clmm: starting vector does not match the "
                              "model dimension");
    }
    theta0 = *options.start;
  }
  const OptimResult res = minimize_bfgs(objective, theta0, options.optim);
  const ClmmParams params = objective.params_from(res.x);

  ClmmFit fit;
  fit.thresholds = params.thresholds;
  fit.beta = params.beta;
  fit.sigma_b = std::exp(params.log_sigma_b);
  if (params.log_sigma_c) fit.sigma_c = std::exp(*params.log_sigma_c);
  fit.loglik = -res.f;
  fit.theta = res.x;
  fit.converged = res.converged;
  fit.n_iterations = res.n_iterations;
  fit.link = link;
  fit.nested = objective.nested();
  fit.n_obs = objective.n_obs();
  fit.n_clusters = objective.n_clusters();
  fit.n_ears = objective.n_ears();
  fit.gradient_method = objective.gradient_method();
  fit.message = res.message;

  const int dim = objective.dim();
  fit.vcov_working = Eigen::MatrixXd::Zero(dim, dim);
  if (options.compute_vcov && res.converged) {
    const Eigen::MatrixXd info =
        fd_information(objective, res.x, options.hessian_step);
    if (info.allFinite()) {
      Eigen::LLT<Eigen::MatrixXd> llt(info);
      if (llt.info() == Eigen::Success) {
        Eigen::MatrixXd vcov =
            llt.solve(Eigen::MatrixXd::Identity(dim, dim));
        if (vcov.allFinite()) {
          fit.vcov_working = std::move(vcov);
          fit.vcov_available = true;
        }
      }
    }
  }
  return fit;
}

double profile_loglik_sigma_b(const OrdinalDataset& data, Link link,
                              double sigma_b_sq, const FitOptions& options) {
  if (!std::isfinite(sigma_b_sq) || sigma_b_sq < 0.0) {
    throw InvalidInputError(
        "profile_loglik_sigma_b: sigma_b_sq must be finite and >= 0");
  }
  if (data.nesting != Nesting::single) {
    throw InvalidInputError(
        "profile_loglik_sigma_b: profiling is defined for single-level data");
  }
  ClmmObjective objective(
      data, link, QuadratureRule::gauss_hermite(options.n_quadrature, options.adaptive),
      sigma_b_sq);
  const OptimResult res =
      minimize_bfgs(objective, objective.starting_values(), options.optim);
  if (!res.converged) {
    std::ostringstream msg;
    msg << "profile fit did not converge at sigma_b_sq = " << sigma_b_sq;
    throw LikelihoodEvalError(msg.str(), "");
  }
  return -res.f;
}

ProfileCi profile_ci_sigma_b(const OrdinalDataset& data, Link link,
                             const ClmmFit& fit, double level,
                             const FitOptions& options) {
  if (data.nesting != Nesting::single || fit.nested) {
    throw InvalidInputError(
        "profile_ci_sigma_b: profiling is defined for single-level data");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidInputError("profile_ci_sigma_b: level must lie in (0, 1)");
  }
  ProfileCi ci;
  if (!fit.converged) {
    ci.message = "full fit did not converge";
    return ci;
  }
  const double s_hat = fit.sigma_b * fit.sigma_b;
  if (s_hat + (fit.sigma_c ? *fit.sigma_c * *fit.sigma_c : 0.0) >
      kDegenerateVarianceGuard) {
    ci.message = "variance estimate beyond the stability guard";
    return ci;
  }

  const double z = normal_quantile(0.5 * (1.0 + level));
  const double target = fit.loglik - 0.5 * z * z;
  const double xtol = 1e-7 * std::max(1.0, s_hat);

  ProfileEvaluator profile(data, link, options, std::max(s_hat, 1e-8),
                           fit.theta);
  // g changes sign at each confidence limit; the profile touches fit.loglik
  // at s_hat, so g(s_hat) ~ z^2/2 > 0.
  auto g = [&](double s) { return profile(s) - target; };

  try {
    // lower limit
    const double g_zero = g(0.0);
    if (g_zero >= 0.0) {
      ci.interval.lower = 0.0;
      ci.lower_at_zero = true;
    } else {
      ci.interval.lower =
          brent_root(g, 0.0, s_hat, g_zero, 0.5 * z * z, xtol);
    }

    // upper limit: geometric bracket expansion
    double lo = s_hat, g_lo = 0.5 * z * z;
    double hi = std::max(2.0 * s_hat, 1e-2);
    bool bracketed = false;
    while (hi <= kProfileUpperWindow) {
      const double g_hi = g(hi);
      if (g_hi < 0.0) {
        ci.interval.upper = brent_root(g, lo, hi, g_lo, g_hi, xtol);
        bracketed = true;
        break;
      }
      lo = hi;
      g_lo = g_hi;
      hi *= 3.0;
    }
    if (!bracketed) {
      ci.message = "upper confidence limit not bracketed within the search "
                   "window";
      return ci;
    }
  } catch (const LikelihoodEvalError& err) {
    ci.message = err.what();
    return ci;
  }

  ci.available = true;
  return ci;
}

}  // namespace ordicc
