#include "ordicc/icc.hpp"

#include <algorithm>
#include <cmath>

#include "ordicc/distributions.hpp"
#include "ordicc/errors.hpp"

namespace ordicc {
namespace {

constexpr double kDegenerateVarianceGuard = 1e4;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double icc_ratio(double v_sum, double denominator_extra) {
  if (std::isinf(v_sum)) return 1.0;
  return v_sum / (v_sum + denominator_extra);
}

}  // namespace

const char* icc_method_name(IccMethod method) {
  switch (method) {
    case IccMethod::clmm_probit: return "clmm_probit";
    case IccMethod::clmm_logistic: return "clmm_logistic";
    case IccMethod::naive_lmm: return "naive_lmm";
  }
  return "unknown";
}

const char* ci_method_name(CiMethod method) {
  switch (method) {
    case CiMethod::none: return "none";
    case CiMethod::profile_transform: return "profile_transform";
    case CiMethod::delta: return "delta";
  }
  return "unknown";
}

IccEstimate icc_from_clmm(const ClmmFit& fit) {
  IccEstimate est;
  est.method = fit.link == Link::probit ? IccMethod::clmm_probit
                                        : IccMethod::clmm_logistic;
  const double v_b = fit.sigma_b * fit.sigma_b;
  const double v_c = fit.sigma_c ? *fit.sigma_c * *fit.sigma_c : 0.0;
  const double v_sum = v_b + v_c;
  if (!std::isfinite(v_sum) || v_sum > kDegenerateVarianceGuard) {
    est.value = 1.0;
    est.degenerate = true;
    return est;
  }
  est.value = clamp01(icc_ratio(v_sum, link_error_variance(fit.link)));
  return est;
}

IccEstimate icc_from_lmm(const LmmFit& fit) {
  const double v_b = fit.sigma_b_sq;
  const double v_c = fit.sigma_c_sq.value_or(0.0);
  const double denom = v_b + v_c + fit.sigma_eps_sq;
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw UndefinedIccError(
        "icc_from_lmm: all variance components are zero or non-finite");
  }
  IccEstimate est;
  est.method = IccMethod::naive_lmm;
  est.value = clamp01((v_b + v_c) / denom);
  return est;
}

Interval transform_profile_ci(const Interval& ci_sigma_b_sq, double m) {
  if (!(m > 0.0)) {
    throw InvalidInputError("transform_profile_ci: m must be positive");
  }
  if (ci_sigma_b_sq.lower < 0.0 ||
      ci_sigma_b_sq.upper < ci_sigma_b_sq.lower) {
    throw InvalidInputError(
        "transform_profile_ci: interval must satisfy 0 <= lo <= hi");
  }
  return {icc_ratio(ci_sigma_b_sq.lower, m),
          icc_ratio(ci_sigma_b_sq.upper, m)};
}

std::optional<Interval> delta_ci(const Eigen::VectorXd& variances,
                                 const Eigen::MatrixXd& vcov,
                                 Nesting structure, double m, double level) {
  const int n_re = structure == Nesting::nested ? 2 : 1;
  const int n = static_cast<int>(variances.size());
  if (n != n_re && n != n_re + 1) {
    throw InvalidInputError(
        "delta_ci: variance vector does not match the structure");
  }
  if (vcov.rows() != n || vcov.cols() != n) {
    throw InvalidInputError("delta_ci: vcov is not conformable");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidInputError("delta_ci: level must lie in (0, 1)");
  }
  const bool has_error_term = n == n_re + 1;
  const double v_re = variances.head(n_re).sum();
  const double denom_extra = has_error_term ? variances[n - 1] : m;
  if (!has_error_term && !(m > 0.0)) {
    throw InvalidInputError("delta_ci: m must be positive");
  }
  const double d = v_re + denom_extra;
  if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;

  const double g = v_re / d;
  Eigen::VectorXd grad(n);
  grad.head(n_re).setConstant(denom_extra / (d * d));
  if (has_error_term) grad[n - 1] = -v_re / (d * d);

  double var_g = grad.dot(vcov * grad);
  if (!std::isfinite(var_g)) return std::nullopt;
  var_g = std::max(var_g, 0.0);
  const double half = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(var_g);
  return Interval{clamp01(g - half), clamp01(g + half)};
}

IccEstimate icc_with_profile_ci(const ClmmFit& fit, const ProfileCi& profile,
                                double level) {
  IccEstimate est = icc_from_clmm(fit);
  est.level = level;
  if (est.degenerate || !profile.available) return est;
  est.ci = transform_profile_ci(profile.interval, link_error_variance(fit.link));
  est.ci_method = CiMethod::profile_transform;
  return est;
}

IccEstimate icc_with_delta_ci(const ClmmFit& fit, double level) {
  IccEstimate est = icc_from_clmm(fit);
  est.level = level;
  if (est.degenerate || !fit.vcov_available) return est;

  // Map the working-scale (log sigma) covariance block into variance
  // coordinates: d sigma^2 / d log sigma = 2 sigma^2.
  const int n_re = fit.nested ? 2 : 1;
  const int dim = static_cast<int>(fit.theta.size());
  Eigen::VectorXd variances(n_re);
  variances[0] = fit.sigma_b * fit.sigma_b;
  if (fit.nested) variances[1] = *fit.sigma_c * *fit.sigma_c;
  const Eigen::MatrixXd block =
      fit.vcov_working.block(dim - n_re, dim - n_re, n_re, n_re);
  const Eigen::VectorXd jac = 2.0 * variances;
  const Eigen::MatrixXd vcov_var =
      jac.asDiagonal() * block * jac.asDiagonal();

  const auto ci = delta_ci(variances, vcov_var,
                           fit.nested ? Nesting::nested : Nesting::single,
                           link_error_variance(fit.link), level);
  if (ci) {
    est.ci = *ci;
    est.ci_method = CiMethod::delta;
  }
  return est;
}

IccEstimate icc_with_delta_ci(const LmmFit& fit, double level) {
  IccEstimate est = icc_from_lmm(fit);
  est.level = level;
  if (!fit.vcov_available) return est;

  const bool nested = fit.sigma_c_sq.has_value();
  const int n = nested ? 3 : 2;
  Eigen::VectorXd variances(n);
  variances[0] = fit.sigma_b_sq;
  if (nested) variances[1] = *fit.sigma_c_sq;
  variances[n - 1] = fit.sigma_eps_sq;

  const auto ci = delta_ci(variances, fit.vcov_varcomp,
                           nested ? Nesting::nested : Nesting::single,
                           /*m=*/1.0, level);
  if (ci) {
    est.ci = *ci;
    est.ci_method = CiMethod::delta;
  }
  return est;
}

}  // namespace ordicc
