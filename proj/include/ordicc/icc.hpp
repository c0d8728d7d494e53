#pragma once

#include <Eigen/Dense>
#include <optional>

#include "ordicc/estimation.hpp"
#include "ordicc/lmm.hpp"

namespace ordicc {

enum class IccMethod { clmm_probit, clmm_logistic, naive_lmm };
enum class CiMethod { none, profile_transform, delta };

const char* icc_method_name(IccMethod method);
const char* ci_method_name(CiMethod method);

struct IccEstimate {
  double value = 0.0;              // in [0, 1]
  std::optional<Interval> ci;      // absent when no CI could be formed
  IccMethod method = IccMethod::clmm_probit;
  CiMethod ci_method = CiMethod::none;
  double level = 0.95;
  bool degenerate = false;         // variance blew past the stability guard
};

// Latent-scale adjusted ICC: (sigma_b^2 [+ sigma_c^2]) / (... + m), with m
// the link's residual variance. Point estimate only.
IccEstimate icc_from_clmm(const ClmmFit& fit);

// Naive ICC from the linear mixed model on the numeric codes; the error
// variance supplies the denominator. Point estimate only.
IccEstimate icc_from_lmm(const LmmFit& fit);

// Monotone map s -> s / (s + m) applied to both endpoints.
Interval transform_profile_ci(const Interval& ci_sigma_b_sq, double m);

// Wald interval for the ICC by the delta method, truncated to [0, 1].
// Convention: with `variances` of length 1 (single) or 2 (nested) the
// denominator adds the constant m; with one extra trailing entry that entry
// is the error variance and m is ignored (the naive model). `vcov` covers
// exactly the entries of `variances`. Returns nullopt when the implied
// standard error is not finite.
std::optional<Interval> delta_ci(const Eigen::VectorXd& variances,
                                 const Eigen::MatrixXd& vcov,
                                 Nesting structure, double m, double level);

// Conveniences wiring the pieces together for reporting.
IccEstimate icc_with_profile_ci(const ClmmFit& fit, const ProfileCi& profile,
                                double level);
IccEstimate icc_with_delta_ci(const ClmmFit& fit, double level);
IccEstimate icc_with_delta_ci(const LmmFit& fit, double level);

}  // namespace ordicc
