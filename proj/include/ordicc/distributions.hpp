#pragma once

#include <cmath>

#include "ordicc/dual.hpp"
#include "ordicc/errors.hpp"

namespace ordicc {

// Latent-error CDF used as the inverse link of the cumulative model.
enum class Link { probit, logistic };

inline const char* link_name(Link link) {
  return link == Link::probit ? "probit" : "logistic";
}

// Variance of the standardized latent error implied by the link: 1 for
// probit, pi^2/3 for logistic. This is the "m" in icc = s / (s + m).
inline double link_error_variance(Link link) {
  constexpr double pi = 3.141592653589793238462643383279502884;
  return link == Link::probit ? 1.0 : pi * pi / 3.0;
}

inline constexpr double kInvSqrt2 = 0.7071067811865475244008443621048490393;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818685;
inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297364056176398;

// ---- standard normal ----

template <class T>
T normal_cdf(const T& x) {
  using std::erfc;
  using ordicc::erfc;
  return 0.5 * erfc(-kInvSqrt2 * x);
}

// Upper tail P(Z > x), accurate for large positive x.
template <class T>
T normal_sf(const T& x) {
  using std::erfc;
  using ordicc::erfc;
  return 0.5 * erfc(kInvSqrt2 * x);
}

template <class T>
T normal_pdf(const T& x) {
  using std::exp;
  using ordicc::exp;
  return kInvSqrt2Pi * exp(-0.5 * x * x);
}

// ---- standard logistic (scale 1, variance pi^2/3) ----

template <class T>
T logistic_cdf(const T& x) {
  using std::exp;
  using ordicc::exp;
  if (val(x) >= 0.0) {
    T e = exp(-x);
    return 1.0 / (1.0 + e);
  }
  T e = exp(x);
  return e / (1.0 + e);
}

template <class T>
T logistic_sf(const T& x) {
  return logistic_cdf(-x);
}

template <class T>
T logistic_pdf(const T& x) {
  using std::exp;
  using ordicc::exp;
  // exp(-|x|) / (1 + exp(-|x|))^2; both branches are the same function, the
  // split only avoids overflow.
  T e = exp(val(x) >= 0.0 ? -x : T(x));
  T onepe = 1.0 + e;
  return e / (onepe * onepe);
}

// ---- link dispatch ----

template <class T>
T link_cdf(Link link, const T& x) {
  return link == Link::probit ? normal_cdf(x) : logistic_cdf(x);
}

template <class T>
T link_sf(Link link, const T& x) {
  return link == Link::probit ? normal_sf(x) : logistic_sf(x);
}

template <class T>
T link_pdf(Link link, const T& x) {
  return link == Link::probit ? normal_pdf(x) : logistic_pdf(x);
}

// Derivative of the link density, used by Newton mode searches:
// normal: f'(x) = -x f(x); logistic: f'(x) = f(x) (1 - 2 F(x)).
template <class T>
T link_pdf_deriv(Link link, const T& x) {
  if (link == Link::probit) return -x * normal_pdf(x);
  return logistic_pdf(x) * (1.0 - 2.0 * logistic_cdf(x));
}

// Inverse CDFs (double only). normal_quantile is Wichura's rational
// approximation, good to ~1e-15 over (0,1); throws InvalidInputError outside.
double normal_quantile(double p);
double logistic_quantile(double p);
double link_quantile(Link link, double p);

}  // namespace ordicc
