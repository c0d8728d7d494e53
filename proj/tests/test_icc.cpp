#include <doctest.h>

#include <cmath>

#include "ordicc/icc.hpp"

using namespace ordicc;

namespace {

ClmmFit synthetic_single_fit(double sigma_b_sq, Link link,
                             double var_log_sigma) {
  ClmmFit fit;
  fit.thresholds.xi.resize(2);
  fit.thresholds.xi << -1.0, 1.0;
  fit.sigma_b = std::sqrt(sigma_b_sq);
  fit.loglik = -100.0;
  fit.theta.resize(3);  // two threshold coordinates + log sigma_b
  fit.theta << -1.0, std::log(2.0), 0.5 * std::log(sigma_b_sq);
  fit.vcov_working = Eigen::MatrixXd::Zero(3, 3);
  fit.vcov_working(2, 2) = var_log_sigma;
  fit.vcov_available = true;
  fit.converged = true;
  fit.link = link;
  return fit;
}

}  // namespace

TEST_SUITE("icc") {

TEST_CASE("probit fit with unit variance gives correlation one half") {
  const ClmmFit fit = synthetic_single_fit(1.0, Link::probit, 0.0);
  const IccEstimate est = icc_from_clmm(fit);
  CHECK(est.value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(est.method == IccMethod::clmm_probit);
  CHECK(!est.degenerate);
}

TEST_CASE("nested probit variances two plus two give four fifths") {
  ClmmFit fit = synthetic_single_fit(2.0, Link::probit, 0.0);
  fit.nested = true;
  fit.sigma_c = std::sqrt(2.0);
  const IccEstimate est = icc_from_clmm(fit);
  CHECK(est.value == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("logistic link shrinks the correlation at equal variance") {
  const ClmmFit probit = synthetic_single_fit(1.0, Link::probit, 0.0);
  const ClmmFit logistic = synthetic_single_fit(1.0, Link::logistic, 0.0);
  const double icc_p = icc_from_clmm(probit).value;
  const double icc_l = icc_from_clmm(logistic).value;
  CHECK(icc_l < icc_p);
  CHECK(icc_l == doctest::Approx(1.0 / (1.0 + M_PI * M_PI / 3.0)).epsilon(1e-14));
  CHECK(icc_from_clmm(logistic).method == IccMethod::clmm_logistic);
}

TEST_CASE("an exploding variance estimate is flagged degenerate") {
  const ClmmFit fit = synthetic_single_fit(1e6, Link::probit, 0.0);
  const IccEstimate est = icc_from_clmm(fit);
  CHECK(est.degenerate);
  CHECK(est.value == 1.0);
  // no interval is attached to a degenerate estimate
  ProfileCi profile;
  profile.available = true;
  profile.interval = {0.5, 2.0};
  const IccEstimate withci = icc_with_profile_ci(fit, profile, 0.95);
  CHECK(withci.degenerate);
  CHECK(!withci.ci.has_value());
}

TEST_CASE("profile interval transforms monotonically to the icc scale") {
  const Interval on_icc = transform_profile_ci({1.0, 4.0}, 1.0);
  CHECK(on_icc.lower == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(on_icc.upper == doctest::Approx(0.8).epsilon(1e-15));

  const Interval degenerate = transform_profile_ci({0.0, 0.0}, 2.5);
  CHECK(degenerate.lower == 0.0);
  CHECK(degenerate.upper == 0.0);

  CHECK_THROWS_AS((void)transform_profile_ci({1.0, 4.0}, 0.0),
                  InvalidInputError);
  CHECK_THROWS_AS((void)transform_profile_ci({4.0, 1.0}, 1.0),
                  InvalidInputError);
  CHECK_THROWS_AS((void)transform_profile_ci({-1.0, 4.0}, 1.0),
                  InvalidInputError);
}

TEST_CASE("delta interval for a single variance against hand arithmetic") {
  // icc = s/(s+1) with s = 1 and var(s) = 0.16: gradient 1/4, se 0.1
  Eigen::VectorXd variances(1);
  variances << 1.0;
  Eigen::MatrixXd vcov(1, 1);
  vcov << 0.16;
  const auto ci = delta_ci(variances, vcov, Nesting::single, 1.0, 0.95);
  REQUIRE(ci.has_value());
  const double z = 1.9599639845400545;
  CHECK(ci->lower == doctest::Approx(0.5 - z * 0.1).epsilon(1e-12));
  CHECK(ci->upper == doctest::Approx(0.5 + z * 0.1).epsilon(1e-12));
}

TEST_CASE("delta interval with a trailing error variance ignores m") {
  // naive convention: variances (vb, ve), gradient (ve, -vb)/d^2
  Eigen::VectorXd variances(2);
  variances << 3.0, 1.0;
  Eigen::MatrixXd vcov(2, 2);
  vcov << 0.25, -0.05, -0.05, 0.04;
  const double d = 4.0;
  Eigen::Vector2d grad(1.0 / (d * d), -3.0 / (d * d));
  const double se = std::sqrt(grad.dot(vcov * grad));
  const double z = 1.9599639845400545;

  const auto ci = delta_ci(variances, vcov, Nesting::single, /*m ignored*/ 99.0,
                           0.95);
  REQUIRE(ci.has_value());
  CHECK(ci->lower == doctest::Approx(0.75 - z * se).epsilon(1e-12));
  CHECK(ci->upper == doctest::Approx(0.75 + z * se).epsilon(1e-12));
}

TEST_CASE("delta interval is truncated to the unit interval") {
  Eigen::VectorXd variances(1);
  variances << 9.0;
  Eigen::MatrixXd vcov(1, 1);
  vcov << 400.0;
  const auto ci = delta_ci(variances, vcov, Nesting::single, 1.0, 0.95);
  REQUIRE(ci.has_value());
  CHECK(ci->lower >= 0.0);
  CHECK(ci->upper <= 1.0);
}

TEST_CASE("zero uncertainty collapses the delta interval to a point") {
  Eigen::VectorXd variances(2);
  variances << 2.0, 2.0;
  const auto ci = delta_ci(variances, Eigen::MatrixXd::Zero(2, 2),
                           Nesting::nested, 1.0, 0.95);
  REQUIRE(ci.has_value());
  CHECK(ci->lower == ci->upper);
  CHECK(ci->lower == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("delta interval validates its inputs") {
  Eigen::VectorXd variances(2);
  variances << 1.0, 1.0;
  const Eigen::MatrixXd v2 = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(
      (void)delta_ci(variances, Eigen::MatrixXd::Identity(3, 3),
                     Nesting::single, 1.0, 0.95),
      InvalidInputError);
  CHECK_THROWS_AS((void)delta_ci(variances, v2, Nesting::single, 1.0, 1.5),
                  InvalidInputError);
  CHECK_THROWS_AS((void)delta_ci(Eigen::VectorXd::Ones(4),
                                 Eigen::MatrixXd::Identity(4, 4),
                                 Nesting::nested, 1.0, 0.95),
                  InvalidInputError);
  // single variance without error term needs a positive m
  Eigen::VectorXd one(1);
  one << 1.0;
  CHECK_THROWS_AS((void)delta_ci(one, Eigen::MatrixXd::Identity(1, 1),
                                 Nesting::single, 0.0, 0.95),
                  InvalidInputError);
}

TEST_CASE("lmm icc requires a positive denominator") {
  LmmFit fit;
  fit.sigma_b_sq = 0.0;
  fit.sigma_eps_sq = 0.0;
  CHECK_THROWS_AS((void)icc_from_lmm(fit), UndefinedIccError);

  fit.sigma_b_sq = 1.0;
  fit.sigma_eps_sq = 3.0;
  CHECK(icc_from_lmm(fit).value == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(icc_from_lmm(fit).method == IccMethod::naive_lmm);
}

TEST_CASE("clmm delta interval maps the log-sigma block correctly") {
  // var(log sigma) = 0.04 becomes var(sigma^2) = (2 s)^2 * 0.04 at s = 1
  const ClmmFit fit = synthetic_single_fit(1.0, Link::probit, 0.04);
  const IccEstimate est = icc_with_delta_ci(fit, 0.95);
  REQUIRE(est.ci.has_value());
  CHECK(est.ci_method == CiMethod::delta);
  const double z = 1.9599639845400545;
  CHECK(est.ci->lower == doctest::Approx(0.5 - z * 0.1).epsilon(1e-10));
  CHECK(est.ci->upper == doctest::Approx(0.5 + z * 0.1).epsilon(1e-10));
}

TEST_CASE("lmm delta interval uses the error variance as denominator") {
  LmmFit fit;
  fit.sigma_b_sq = 3.0;
  fit.sigma_eps_sq = 1.0;
  fit.converged = true;
  fit.vcov_available = true;
  fit.vcov_varcomp.resize(2, 2);
  fit.vcov_varcomp << 0.25, -0.05, -0.05, 0.04;
  const IccEstimate est = icc_with_delta_ci(fit, 0.95);
  REQUIRE(est.ci.has_value());
  const double d = 4.0;
  Eigen::Vector2d grad(1.0 / (d * d), -3.0 / (d * d));
  const double se = std::sqrt(grad.dot(fit.vcov_varcomp * grad));
  const double z = 1.9599639845400545;
  CHECK(est.value == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(est.ci->lower == doctest::Approx(0.75 - z * se).epsilon(1e-10));
  CHECK(est.ci->upper == doctest::Approx(0.75 + z * se).epsilon(1e-10));
}

TEST_CASE("profile-based icc interval is attached when available") {
  const ClmmFit fit = synthetic_single_fit(1.0, Link::probit, 0.0);
  ProfileCi profile;
  profile.available = true;
  profile.interval = {0.5, 3.0};
  const IccEstimate est = icc_with_profile_ci(fit, profile, 0.9);
  REQUIRE(est.ci.has_value());
  CHECK(est.ci_method == CiMethod::profile_transform);
  CHECK(est.level == doctest::Approx(0.9));
  CHECK(est.ci->lower == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(est.ci->upper == doctest::Approx(0.75).epsilon(1e-14));

  ProfileCi missing;
  missing.available = false;
  const IccEstimate none = icc_with_profile_ci(fit, missing, 0.95);
  CHECK(!none.ci.has_value());
  CHECK(none.ci_method == CiMethod::none);
}

}  // TEST_SUITE
