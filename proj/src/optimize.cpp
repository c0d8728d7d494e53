#include "ordicc/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ordicc/errors.hpp"

namespace ordicc {

OptimResult minimize_bfgs(Objective& objective, const Eigen::VectorXd& x0,
                          const OptimOptions& options) {
  const int n = static_cast<int>(x0.size());
  OptimResult result;
  result.x = x0;
  result.gradient.resize(n);
  result.f = objective.value_and_gradient(result.x, result.gradient);

  if (!std::isfinite(result.f) || !result.gradient.allFinite()) {
    result.message = "objective not finite at the starting point";
    return result;
  }
  if (result.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) {
    result.converged = true;
    result.message = "already stationary at the starting point";
    return result;
  }

  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool scaled_once = false;
  constexpr double armijo_c1 = 1e-4;
  int stalled = 0;

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.n_iterations = iter;

    Eigen::VectorXd direction = -(h_inv * result.gradient);
    double slope = direction.dot(result.gradient);
    if (!(slope < 0.0) || !direction.allFinite()) {
      // Curvature information went bad; restart from steepest descent.
      h_inv.setIdentity();
      scaled_once = false;
      direction = -result.gradient;
      slope = direction.dot(result.gradient);
    }

    double f_new = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd x_new;
    bool accepted = false;
    auto backtrack_along = [&]() {
      double alpha = 1.0;
      for (int backtrack = 0; backtrack < 60; ++backtrack) {
        x_new = result.x + alpha * direction;
        f_new = objective.value(x_new);
        if (std::isfinite(f_new) &&
            f_new <= result.f + armijo_c1 * alpha * slope) {
          accepted = true;
          return;
        }
        alpha *= 0.5;
      }
    };
    backtrack_along();
    if (!accepted && !h_inv.isIdentity(0.0)) {
      // Stale curvature can make the quasi-Newton direction unusable even
      // though it points downhill; drop it and retry along the gradient.
      h_inv.setIdentity();
      scaled_once = false;
      direction = -result.gradient;
      slope = direction.dot(result.gradient);
      backtrack_along();
    }
    if (!accepted) {
      result.message = "line search failed to make progress";
      return result;
    }

    Eigen::VectorXd g_new(n);
    const double f_checked = objective.value_and_gradient(x_new, g_new);
    if (!std::isfinite(f_checked) || !g_new.allFinite()) {
      result.message = "gradient not finite at an accepted step";
      return result;
    }

    const Eigen::VectorXd s = x_new - result.x;
    const Eigen::VectorXd y = g_new - result.gradient;
    const double rel_df = std::fabs(result.f - f_new) /
                          (std::fabs(result.f) + std::fabs(f_new) + 1.0);
    const double f_noise = 8.0 * std::numeric_limits<double>::epsilon() *
                           (std::fabs(result.f) + 1.0);
    // A stall needs both: f differences lost to rounding AND a gradient that
    // is no longer shrinking (near an optimum f flattens quadratically while
    // the gradient still falls, so f alone would cut off too early).
    const bool gradient_stuck = g_new.lpNorm<Eigen::Infinity>() >
                                0.5 * result.gradient.lpNorm<Eigen::Infinity>();
    stalled = (std::fabs(result.f - f_new) <= f_noise && gradient_stuck)
                  ? stalled + 1
                  : 0;

    result.x = x_new;
    result.f = f_checked;
    result.gradient = g_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled_once) {
        h_inv *= sy / y.squaredNorm();
        scaled_once = true;
      }
      // Inverse BFGS update: H <- (I - r s y') H (I - r y s') + r s s'.
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      const double yhy = y.dot(hy);
      h_inv.noalias() += (rho * rho * yhy + rho) * (s * s.transpose());
      h_inv.noalias() -= rho * (hy * s.transpose() + s * hy.transpose());
    }

    if (result.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol &&
        rel_df < options.rel_f_tol) {
      result.converged = true;
      result.message = "converged";
      return result;
    }
    if (stalled >= 3) {
      // Objective differences are below double precision, so the optimum is
      // located up to the rounding basin. A gradient consistent with a point
      // inside that basin (|g| <= sqrt(2 f_noise H), H from the latest
      // accepted step) cannot be improved on; anything larger is a failure.
      const double curvature = sy > 0.0 ? sy / s.squaredNorm() : 1.0;
      const double basin_grad = std::min(
          10.0 * std::sqrt(2.0 * f_noise * curvature), 100.0 * options.grad_tol);
      if (result.gradient.lpNorm<Eigen::Infinity>() <= basin_grad) {
        result.converged = true;
        result.message = "converged within numerical precision";
      } else {
        result.message = "stalled at numerical precision";
      }
      return result;
    }
  }

  result.message = "iteration limit reached";
  return result;
}

double brent_root(const std::function<double(double)>& f, double a, double b,
                  double fa, double fb, double xtol, int max_iterations) {
  if (!(fa * fb <= 0.0)) {
    throw InvalidInputError("brent_root: endpoints do not bracket a root");
  }
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;

  double c = a, fc = fa;
  double d = b - a, e = d;

  for (int iter = 0; iter < max_iterations; ++iter) {
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol = 2.0 * std::numeric_limits<double>::epsilon() *
                           std::fabs(b) + 0.5 * xtol;
    const double m = 0.5 * (c - b);
    if (std::fabs(m) <= tol || fb == 0.0) return b;

    if (std::fabs(e) < tol || std::fabs(fa) <= std::fabs(fb)) {
      d = m; e = m;  // bisection
    } else {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::fabs(tol * q),
                             std::fabs(e * q))) {
        e = d; d = p / q;  // interpolation accepted
      } else {
        d = m; e = m;
      }
    }
    a = b; fa = fb;
    b += std::fabs(d) > tol ? d : (m > 0.0 ? tol : -tol);
    fb = f(b);
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a; fc = fa;
      d = b - a; e = d;
    }
  }
  return b;
}

}  // namespace ordicc
