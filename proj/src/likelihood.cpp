#include "ordicc/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

namespace ordicc {
namespace {

constexpr double kLogProbFloor = -690.77552789821368;  // log(1e-300)
constexpr double kModeTol = 1e-11;
constexpr int kModeMaxIter = 100;
constexpr double kModeStepCap = 4.0;

// log of a cell probability, floored so it never reaches -inf. Once the
// floor engages the contribution is constant (zero derivative).
template <class T>
T log_cell(int k, const T& eta, const std::vector<T>& xi, Link link) {
  using std::log;
  using ordicc::log;
  T p = cell_prob(k, eta, std::span<const T>(xi.data(), xi.size()), link);
  if (!(val(p) > kProbFloor)) return T(kLogProbFloor);
  return log(p);
}

// First and second derivatives of log cell probability with respect to the
// linear predictor. Both are zeroed once the probability hits the floor
// (matching the flat floored value).
template <class T>
void log_cell_d12(int k, const T& u, const std::vector<T>& xi, Link link,
                  T& l1, T& l2) {
  const int n_categories = static_cast<int>(xi.size()) + 1;
  T p(1.0), q(0.0), r(0.0);  // prob and its first two d/du derivatives
  if (k == 1) {
    const T hi = xi[0] - u;
    p = link_cdf(link, hi);
    q = -link_pdf(link, hi);
    r = link_pdf_deriv(link, hi);
  } else if (k == n_categories) {
    const T lo = xi[k - 2] - u;
    p = link_sf(link, lo);
    q = link_pdf(link, lo);
    r = -link_pdf_deriv(link, lo);
  } else {
    const T lo = xi[k - 2] - u;
    const T hi = xi[k - 1] - u;
    p = val(lo) > 0.0 ? link_sf(link, lo) - link_sf(link, hi)
                      : link_cdf(link, hi) - link_cdf(link, lo);
    q = link_pdf(link, lo) - link_pdf(link, hi);
    r = link_pdf_deriv(link, hi) - link_pdf_deriv(link, lo);
  }
  if (!(val(p) > kProbFloor)) {
    l1 = T(0.0);
    l2 = T(0.0);
    return;
  }
  l1 = q / p;
  l2 = r / p - l1 * l1;
}

template <class T>
T logsumexp(const std::vector<T>& v, int n) {
  using std::exp;
  using std::log;
  using ordicc::exp;
  using ordicc::log;
  int arg = 0;
  for (int i = 1; i < n; ++i) {
    if (val(v[i]) > val(v[arg])) arg = i;
  }
  T acc(0.0);
  for (int i = 0; i < n; ++i) {
    if (i == arg) continue;
    acc += exp(v[i] - v[arg]);
  }
  return v[arg] + log(1.0 + acc);
}

// Everything an evaluation needs in the scalar type T; built once per pass.
template <class T>
struct Working {
  std::vector<T> xi;
  std::vector<T> eta;  // packed per-observation x'beta
  T sigma_b{0.0};
  T sigma_c{0.0};
};

template <class T>
struct Scratch {
  std::vector<T> outer_terms;
  std::vector<T> inner_terms;
  std::vector<T> sum1, sum2, zc, zc0, ratio, step;  // per-ear buffers
};

template <class T>
void clamp_step(T& step) {
  if (val(step) > kModeStepCap) {
    step = T(kModeStepCap);
  } else if (val(step) < -kModeStepCap) {
    step = T(-kModeStepCap);
  }
}

// Newton ascent of a strictly concave 1-D function whose first two
// derivatives `derivs(z)` writes into h1/h2. The slope signs bracket the
// maximum; a clamped Newton step that leaves the bracket becomes a
// bisection, so the iteration cannot cycle. With settle_only the entry
// point is already converged and a single unguarded step is taken purely to
// propagate derivatives through the implicit mode. Either way derivs() has
// run at the adopted centre on return.
template <class T, class Derivs>
void newton_mode_1d(T& z, T& h1, T& h2, const Derivs& derivs,
                    bool settle_only) {
  if (settle_only) {
    derivs(z);
    T step = -(h1 / h2);
    clamp_step(step);
    z += step;
    derivs(z);
    return;
  }
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kModeMaxIter; ++it) {
    derivs(z);
    if (val(h1) == 0.0) break;
    if (val(h1) > 0.0) {
      lo = val(z);
    } else {
      hi = val(z);
    }
    T step = -(h1 / h2);
    clamp_step(step);
    T cand = z + step;
    if (!(val(cand) > lo) || !(val(cand) < hi)) {
      cand = T(0.5 * (lo + hi));
      if (!std::isfinite(val(cand))) break;
    }
    const double moved = std::fabs(val(cand) - val(z));
    z = cand;
    if (moved < kModeTol) break;
  }
  derivs(z);
}

// One cluster of single-level data: adaptive Gauss-Hermite after a Newton
// search for the mode of h(z) = sum_j log p_j(eta_j + sigma_b z) + log phi(z).
// With settle_only the cached mode is assumed converged and one Newton step
// is taken purely to propagate derivatives through the implicit mode.
template <class T>
T cluster_single(const std::vector<int>& category, const Working<T>& w,
                 Link link, const ObsSpan& obs, const QuadratureRule& rule,
                 const Eigen::VectorXd& log_w_adj, double& mode_cache,
                 bool settle_only, Scratch<T>& scratch) {
  T zhat(std::isfinite(mode_cache) ? mode_cache : 0.0);
  T h2(-1.0);

  if (rule.adaptive) {
    T h1(0.0);
    auto derivs = [&](const T& z) {
      T s1(0.0), s2(0.0), l1(0.0), l2(0.0);
      const T shift = w.sigma_b * z;
      for (int i = obs.begin; i < obs.end; ++i) {
        log_cell_d12(category[i], T(w.eta[i] + shift), w.xi, link, l1, l2);
        s1 += l1;
        s2 += l2;
      }
      h1 = w.sigma_b * s1 - z;
      h2 = w.sigma_b * w.sigma_b * s2 - 1.0;
    };
    newton_mode_1d(zhat, h1, h2, derivs, settle_only);
    mode_cache = std::isfinite(val(zhat)) ? val(zhat) : 0.0;
  }

  const T chat = rule.adaptive ? T(-h2) : T(1.0);
  using std::sqrt;
  using std::log;
  using ordicc::sqrt;
  using ordicc::log;
  const T scale = 1.0 / sqrt(chat);

  for (int q = 0; q < rule.n_nodes; ++q) {
    const T z = zhat + scale * rule.nodes[q];
    T h = -0.5 * z * z - kLogSqrt2Pi;
    const T shift = w.sigma_b * z;
    for (int i = obs.begin; i < obs.end; ++i) {
      h += log_cell(category[i], T(w.eta[i] + shift), w.xi, link);
    }
    scratch.outer_terms[q] = log_w_adj[q] + h;
  }
  return logsumexp(scratch.outer_terms, rule.n_nodes) - 0.5 * log(chat);
}

// One subject of nested data. The outer adaptation comes from the joint
// (z_b, z_c1..z_cE) mode, found by Newton steps on the arrow-structured
// Hessian and condensed to the z_b direction by its Schur complement; the
// inner integral per (ear, outer node) is its own adaptive one-dimensional
// rule with modes warm-started across evaluations.
template <class T>
T cluster_nested(const std::vector<int>& category, const Working<T>& w,
                 Link link, const PackedCluster& cl, const QuadratureRule& rule,
                 const Eigen::VectorXd& log_w_adj, Eigen::VectorXd& joint_cache,
                 Eigen::MatrixXd& inner_cache, bool settle_only,
                 Scratch<T>& scratch) {
  using std::sqrt;
  using std::log;
  using ordicc::sqrt;
  using ordicc::log;
  const int n_ears = static_cast<int>(cl.ears.size());
  const int n_nodes = rule.n_nodes;

  T zb(std::isfinite(joint_cache[0]) ? joint_cache[0] : 0.0);
  std::vector<T>& zc = scratch.zc;
  for (int e = 0; e < n_ears; ++e) {
    const double cached = joint_cache[1 + e];
    zc[e] = T(std::isfinite(cached) ? cached : 0.0);
  }

  T schur(-1.0);
  if (rule.adaptive) {
    // Gradient of H(z_b, z_c) at the current point condensed to the z_b
    // direction by the Schur complement of the ear-diagonal Hessian block;
    // with want_step the Newton step lands in step_b / scratch.step without
    // being applied, and the step's inf-norm is returned.
    T step_b(0.0);
    auto compute = [&](bool want_step) -> double {
      T g_b(0.0), a_bb(-1.0), rhs(0.0);
      for (int e = 0; e < n_ears; ++e) {
        T s1(0.0), s2(0.0), l1(0.0), l2(0.0);
        const T shift = w.sigma_b * zb + w.sigma_c * zc[e];
        for (int i = cl.ears[e].begin; i < cl.ears[e].end; ++i) {
          log_cell_d12(category[i], T(w.eta[i] + shift), w.xi, link, l1, l2);
          s1 += l1;
          s2 += l2;
        }
        scratch.sum1[e] = s1;
        scratch.sum2[e] = s2;
        g_b += w.sigma_b * s1;
        a_bb += w.sigma_b * w.sigma_b * s2;
      }
      g_b -= zb;
      schur = a_bb;
      rhs = g_b;
      for (int e = 0; e < n_ears; ++e) {
        const T g_e = w.sigma_c * scratch.sum1[e] - zc[e];
        const T d_e = w.sigma_c * w.sigma_c * scratch.sum2[e] - 1.0;
        const T b_e = w.sigma_b * w.sigma_c * scratch.sum2[e];
        const T b_over_d = b_e / d_e;
        schur -= b_e * b_over_d;
        rhs -= b_over_d * g_e;
        scratch.ratio[e] = b_e;
        scratch.step[e] = g_e;  // finished below once step_b is known
      }
      if (!want_step) return 0.0;
      step_b = -(rhs / schur);
      double magnitude = std::fabs(val(step_b));
      for (int e = 0; e < n_ears; ++e) {
        const T d_e = w.sigma_c * w.sigma_c * scratch.sum2[e] - 1.0;
        scratch.step[e] =
            -((scratch.step[e] + scratch.ratio[e] * step_b) / d_e);
        magnitude = std::max(magnitude, std::fabs(val(scratch.step[e])));
      }
      return magnitude;
    };

    if (settle_only) {
      // entry point already converged: one step propagates derivatives
      compute(true);
      zb += step_b;
      for (int e = 0; e < n_ears; ++e) zc[e] += scratch.step[e];
    } else {
      // Damped Newton: the whole step vector is scaled down until H does
      // not decrease. Concavity (Hessian <= -I) makes the Newton direction
      // an ascent direction, so the backtracking terminates and the
      // iteration cannot cycle.
      std::vector<double> xi_d(w.xi.size());
      for (std::size_t j = 0; j < xi_d.size(); ++j) xi_d[j] = val(w.xi[j]);
      auto joint_value = [&]() -> double {
        double total = -0.5 * val(zb) * val(zb);
        for (int e = 0; e < n_ears; ++e) {
          total -= 0.5 * val(zc[e]) * val(zc[e]);
          const double shift =
              val(w.sigma_b) * val(zb) + val(w.sigma_c) * val(zc[e]);
          for (int i = cl.ears[e].begin; i < cl.ears[e].end; ++i) {
            total += log_cell(category[i], val(w.eta[i]) + shift, xi_d, link);
          }
        }
        return total;
      };

      double h_cur = joint_value();
      for (int it = 0; it < kModeMaxIter; ++it) {
        const double magnitude = compute(true);
        if (!(magnitude > 0.0)) break;
        double scale =
            magnitude > kModeStepCap ? kModeStepCap / magnitude : 1.0;
        const T zb0 = zb;
        for (int e = 0; e < n_ears; ++e) scratch.zc0[e] = zc[e];
        double h_new;
        for (int half = 0;; ++half) {
          zb = zb0 + scale * step_b;
          for (int e = 0; e < n_ears; ++e) {
            zc[e] = scratch.zc0[e] + scale * scratch.step[e];
          }
          h_new = joint_value();
          if (h_new >= h_cur - 1e-12 * (std::fabs(h_cur) + 1.0) ||
              half >= 30) {
            break;
          }
          scale *= 0.5;
        }
        h_cur = h_new;
        if (scale * magnitude < kModeTol) break;
      }
    }
    compute(false);  // Schur complement at the adopted centre
    joint_cache[0] = std::isfinite(val(zb)) ? val(zb) : 0.0;
    for (int e = 0; e < n_ears; ++e) {
      joint_cache[1 + e] = std::isfinite(val(zc[e])) ? val(zc[e]) : 0.0;
    }
  }

  const T c_outer = rule.adaptive ? T(-schur) : T(1.0);
  const T s_outer = 1.0 / sqrt(c_outer);

  for (int q = 0; q < n_nodes; ++q) {
    const T t = rule.adaptive ? T(zb + s_outer * rule.nodes[q])
                              : T(rule.nodes[q]);
    T h_outer = -0.5 * t * t - kLogSqrt2Pi;
    const T subject_shift = w.sigma_b * t;

    for (int e = 0; e < n_ears; ++e) {
      const ObsSpan ear = cl.ears[e];
      T zin(0.0), h2_in(-1.0);
      if (rule.adaptive) {
        double& cached = inner_cache(e, q);
        zin = T(std::isfinite(cached) ? cached : val(zc[e]));
        T h1_in(0.0);
        auto derivs = [&](const T& z) {
          T s1(0.0), s2(0.0), l1(0.0), l2(0.0);
          const T shift = subject_shift + w.sigma_c * z;
          for (int i = ear.begin; i < ear.end; ++i) {
            log_cell_d12(category[i], T(w.eta[i] + shift), w.xi, link, l1,
                         l2);
            s1 += l1;
            s2 += l2;
          }
          h1_in = w.sigma_c * s1 - z;
          h2_in = w.sigma_c * w.sigma_c * s2 - 1.0;
        };
        newton_mode_1d(zin, h1_in, h2_in, derivs, settle_only);
        cached = std::isfinite(val(zin)) ? val(zin) : 0.0;
      }
      const T c_in = rule.adaptive ? T(-h2_in) : T(1.0);
      const T s_in = 1.0 / sqrt(c_in);

      for (int r = 0; r < n_nodes; ++r) {
        const T z = zin + s_in * rule.nodes[r];
        T h = -0.5 * z * z - kLogSqrt2Pi;
        const T shift = subject_shift + w.sigma_c * z;
        for (int i = ear.begin; i < ear.end; ++i) {
          h += log_cell(category[i], T(w.eta[i] + shift), w.xi, link);
        }
        scratch.inner_terms[r] = log_w_adj[r] + h;
      }
      h_outer += logsumexp(scratch.inner_terms, n_nodes) - 0.5 * log(c_in);
    }
    scratch.outer_terms[q] = log_w_adj[q] + h_outer;
  }
  return logsumexp(scratch.outer_terms, n_nodes) - 0.5 * log(c_outer);
}

}  // namespace

double cell_prob(int k, double eta, const ThresholdSet& thresholds,
                 Link link) {
  if (!thresholds.valid()) {
    throw InvalidInputError("cell_prob: thresholds must be finite and "
                            "strictly increasing");
  }
  const int n_categories = thresholds.n_categories();
  if (k < 1 || k > n_categories) {
    throw InvalidInputError("cell_prob: category out of range");
  }
  if (!std::isfinite(eta)) {
    throw InvalidInputError("cell_prob: eta must be finite");
  }
  std::vector<double> xi(thresholds.xi.data(),
                         thresholds.xi.data() + thresholds.xi.size());
  return cell_prob(k, eta, std::span<const double>(xi.data(), xi.size()),
                   link);
}

Eigen::VectorXd pack_working(const ClmmParams& params) {
  if (!params.thresholds.valid()) {
    throw InvalidInputError("pack_working: invalid thresholds");
  }
  const int n_thresh = static_cast<int>(params.thresholds.xi.size());
  const int p = static_cast<int>(params.beta.size());
  Eigen::VectorXd theta(n_thresh + p + 1 + (params.log_sigma_c ? 1 : 0));
  theta[0] = params.thresholds.xi[0];
  for (int k = 1; k < n_thresh; ++k) {
    theta[k] = std::log(params.thresholds.xi[k] - params.thresholds.xi[k - 1]);
  }
  theta.segment(n_thresh, p) = params.beta;
  theta[n_thresh + p] = params.log_sigma_b;
  if (params.log_sigma_c) theta[n_thresh + p + 1] = *params.log_sigma_c;
  return theta;
}

ClmmParams unpack_working(const Eigen::VectorXd& theta, int n_categories,
                          int n_covariates, bool nested, Link link) {
  const int n_thresh = n_categories - 1;
  const int expected = n_thresh + n_covariates + 1 + (nested ? 1 : 0);
  if (n_categories < 2 || theta.size() != expected) {
    throw InvalidInputError("unpack_working: parameter vector has the wrong "
                            "length");
  }
  ClmmParams params;
  params.link = link;
  params.thresholds.xi.resize(n_thresh);
  params.thresholds.xi[0] = theta[0];
  for (int k = 1; k < n_thresh; ++k) {
    params.thresholds.xi[k] = params.thresholds.xi[k - 1] + std::exp(theta[k]);
  }
  params.beta = theta.segment(n_thresh, n_covariates);
  params.log_sigma_b = theta[n_thresh + n_covariates];
  if (nested) params.log_sigma_c = theta[n_thresh + n_covariates + 1];
  return params;
}

ClmmObjective::ClmmObjective(const OrdinalDataset& data, Link link,
                             QuadratureRule rule,
                             std::optional<double> fixed_sigma_b_sq)
    : link_(link),
      nested_(data.nesting == Nesting::nested),
      n_categories_(data.n_categories),
      n_covariates_(data.n_covariates()),
      fixed_sigma_b_sq_(fixed_sigma_b_sq),
      rule_(std::move(rule)) {
  const auto violations = validate(data);
  if (!violations.empty()) {
    throw InvalidInputError("likelihood: invalid dataset: " +
                            violations.front().where + ": " +
                            violations.front().message);
  }
  if (rule_.n_nodes < 1 ||
      rule_.nodes.size() != static_cast<Eigen::Index>(rule_.n_nodes) ||
      rule_.weights.size() != static_cast<Eigen::Index>(rule_.n_nodes)) {
    throw InvalidInputError("likelihood: malformed quadrature rule");
  }
  if (fixed_sigma_b_sq_ &&
      (!std::isfinite(*fixed_sigma_b_sq_) || *fixed_sigma_b_sq_ < 0.0)) {
    throw InvalidInputError("likelihood: fixed sigma_b^2 must be >= 0");
  }

  log_w_adj_.resize(rule_.n_nodes);
  for (int q = 0; q < rule_.n_nodes; ++q) {
    log_w_adj_[q] = std::log(rule_.weights[q]) + kLogSqrt2Pi +
                    0.5 * rule_.nodes[q] * rule_.nodes[q];
  }

  const ClusterLayout layout = cluster_layout(data);
  const int n = data.n_obs();
  category_.resize(n);
  x_.resize(n, n_covariates_);
  for (int pos = 0; pos < n; ++pos) {
    const int i = layout.order[pos];
    category_[pos] = data.categories[i];
    x_.row(pos) = data.covariates.row(i);
  }
  clusters_.resize(layout.clusters.size());
  for (std::size_t c = 0; c < layout.clusters.size(); ++c) {
    clusters_[c].obs = {layout.clusters[c].begin, layout.clusters[c].end};
    clusters_[c].id = layout.cluster_ids[c];
    if (nested_) {
      for (const auto& ear : layout.ears[c]) {
        clusters_[c].ears.push_back({ear.begin, ear.end});
      }
    }
  }

  mode_single_.assign(clusters_.size(), 0.0);
  if (nested_) {
    mode_joint_.resize(clusters_.size());
    mode_inner_.resize(clusters_.size());
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      const int n_ears = static_cast<int>(clusters_[c].ears.size());
      mode_joint_[c] = Eigen::VectorXd::Zero(1 + n_ears);
      mode_inner_[c] = Eigen::MatrixXd::Zero(n_ears, rule_.n_nodes);
    }
  }

  // starting values: thresholds from empirical cumulative frequencies via
  // the inverse link, beta = 0, log sigmas = 0
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_categories_);
  for (int k : category_) counts[k - 1] += 1.0;
  start_ = Eigen::VectorXd::Zero(dim());
  double cum = 0.0;
  double prev = 0.0;
  for (int k = 0; k + 1 < n_categories_; ++k) {
    cum += counts[k];
    const double xi_k = link_quantile(link_, cum / n);
    start_[k] = k == 0 ? xi_k : std::log(xi_k - prev);
    prev = xi_k;
  }
}

void ClmmObjective::set_fixed_sigma_b_sq(double sigma_b_sq) {
  if (!fixed_sigma_b_sq_) {
    throw InvalidInputError("set_fixed_sigma_b_sq: objective was not "
                            "constructed for profiling");
  }
  if (!std::isfinite(sigma_b_sq) || sigma_b_sq < 0.0) {
    throw InvalidInputError("set_fixed_sigma_b_sq: need sigma_b^2 >= 0");
  }
  fixed_sigma_b_sq_ = sigma_b_sq;
}

int ClmmObjective::dim() const {
  return (n_categories_ - 1) + n_covariates_ + (fixed_sigma_b_sq_ ? 0 : 1) +
         (nested_ ? 1 : 0);
}

int ClmmObjective::n_ears() const {
  if (!nested_) return 0;
  int total = 0;
  for (const auto& cl : clusters_) total += static_cast<int>(cl.ears.size());
  return total;
}

const char* ClmmObjective::gradient_method() const {
  return dim() <= kMaxDualDim ? "forward-mode dual numbers"
                              : "central finite differences";
}

Eigen::VectorXd ClmmObjective::starting_values() const { return start_; }

ClmmParams ClmmObjective::params_from(const Eigen::VectorXd& theta) const {
  if (fixed_sigma_b_sq_) {
    throw InvalidInputError("params_from: profiling objective has no free "
                            "sigma_b");
  }
  return unpack_working(theta, n_categories_, n_covariates_, nested_, link_);
}

Eigen::VectorXd ClmmObjective::theta_from(const ClmmParams& params) const {
  if (fixed_sigma_b_sq_) {
    throw InvalidInputError("theta_from: profiling objective has no free "
                            "sigma_b");
  }
  if (params.thresholds.n_categories() != n_categories_ ||
      params.beta.size() != n_covariates_ ||
      params.log_sigma_c.has_value() != nested_ || params.link != link_) {
    throw InvalidInputError("theta_from: parameters do not match the model");
  }
  return pack_working(params);
}

template <class T>
double ClmmObjective::accumulate(const Eigen::VectorXd& theta,
                                 bool settle_only,
                                 Eigen::VectorXd* gradient_out, bool checked) {
  const int d = dim();
  if (theta.size() != d) {
    throw InvalidInputError("likelihood: parameter vector has the wrong "
                            "length");
  }
  constexpr bool is_dual = std::is_same_v<T, Dual>;
  auto coord = [&](int j) -> T {
    if constexpr (is_dual) {
      return Dual::seeded(theta[j], d, j);
    } else {
      return theta[j];
    }
  };

  using std::exp;
  using ordicc::exp;

  Working<T> w;
  const int n_thresh = n_categories_ - 1;
  w.xi.resize(n_thresh);
  w.xi[0] = coord(0);
  for (int k = 1; k < n_thresh; ++k) {
    w.xi[k] = w.xi[k - 1] + exp(coord(k));
  }
  const int n = n_obs();
  w.eta.assign(n, T(0.0));
  if (n_covariates_ > 0) {
    std::vector<T> beta(n_covariates_);
    for (int m = 0; m < n_covariates_; ++m) beta[m] = coord(n_thresh + m);
    for (int i = 0; i < n; ++i) {
      T acc(0.0);
      for (int m = 0; m < n_covariates_; ++m) acc += x_(i, m) * beta[m];
      w.eta[i] = acc;
    }
  }
  int pos = n_thresh + n_covariates_;
  if (fixed_sigma_b_sq_) {
    w.sigma_b = T(std::sqrt(*fixed_sigma_b_sq_));
  } else {
    w.sigma_b = exp(coord(pos++));
  }
  if (nested_) w.sigma_c = exp(coord(pos));

  Scratch<T> scratch;
  scratch.outer_terms.assign(rule_.n_nodes, T(0.0));
  scratch.inner_terms.assign(rule_.n_nodes, T(0.0));
  std::size_t max_ears = 0;
  for (const auto& cl : clusters_) max_ears = std::max(max_ears,
                                                       cl.ears.size());
  scratch.sum1.assign(max_ears, T(0.0));
  scratch.sum2.assign(max_ears, T(0.0));
  scratch.zc.assign(max_ears, T(0.0));
  scratch.zc0.assign(max_ears, T(0.0));
  scratch.ratio.assign(max_ears, T(0.0));
  scratch.step.assign(max_ears, T(0.0));

  T total(0.0);
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    T term = nested_
                 ? cluster_nested(category_, w, link_, clusters_[c], rule_,
                                  log_w_adj_, mode_joint_[c], mode_inner_[c],
                                  settle_only, scratch)
                 : cluster_single(category_, w, link_, clusters_[c].obs,
                                  rule_, log_w_adj_, mode_single_[c],
                                  settle_only, scratch);
    if (checked && !std::isfinite(val(term))) {
      throw LikelihoodEvalError("likelihood: non-finite contribution",
                                clusters_[c].id);
    }
    total += term;
  }
  if (gradient_out) *gradient_out = grad(total, d);
  return val(total);
}

double ClmmObjective::value(const Eigen::VectorXd& theta) {
  return -accumulate<double>(theta, false, nullptr, false);
}

double ClmmObjective::value_and_gradient(const Eigen::VectorXd& theta,
                                         Eigen::VectorXd& gradient) {
  const int d = dim();
  if (d <= kMaxDualDim) {
    // converge the mode caches in plain doubles first, then one dual pass
    const double primal = accumulate<double>(theta, false, nullptr, false);
    if (!std::isfinite(primal)) {
      gradient = Eigen::VectorXd::Constant(
          d, std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::infinity();
    }
    const double value = accumulate<Dual>(theta, true, &gradient, false);
    gradient = -gradient;
    return -value;
  }
  // gradient dimension exceeds the dual capacity: central differences
  const double f = value(theta);
  gradient.resize(d);
  Eigen::VectorXd shifted = theta;
  for (int j = 0; j < d; ++j) {
    const double h = 1e-6 * std::max(1.0, std::fabs(theta[j]));
    shifted[j] = theta[j] + h;
    const double up = value(shifted);
    shifted[j] = theta[j] - h;
    const double down = value(shifted);
    shifted[j] = theta[j];
    gradient[j] = (up - down) / (2.0 * h);
  }
  return f;
}

double ClmmObjective::loglik_checked(const Eigen::VectorXd& theta) {
  return accumulate<double>(theta, false, nullptr, true);
}

Eigen::VectorXd ClmmObjective::loglik_gradient_checked(
    const Eigen::VectorXd& theta) {
  Eigen::VectorXd gradient(dim());
  if (dim() <= kMaxDualDim) {
    accumulate<double>(theta, false, nullptr, true);
    accumulate<Dual>(theta, true, &gradient, true);
  } else {
    const double unused = -value_and_gradient(theta, gradient);
    if (!std::isfinite(unused)) {
      throw LikelihoodEvalError("likelihood: non-finite value", "");
    }
    gradient = -gradient;
  }
  return gradient;
}

namespace {

void check_params_against(const ClmmParams& params, const OrdinalDataset& data,
                          bool nested) {
  if (!params.thresholds.valid()) {
    throw InvalidInputError("loglik: thresholds must be strictly increasing");
  }
  if (params.thresholds.n_categories() != data.n_categories) {
    throw InvalidInputError("loglik: threshold count does not match the "
                            "number of categories");
  }
  if (params.beta.size() != data.covariates.cols()) {
    throw InvalidInputError("loglik: beta length does not match covariates");
  }
  if (!params.beta.allFinite() || !std::isfinite(params.log_sigma_b)) {
    throw InvalidInputError("loglik: parameters must be finite");
  }
  if (nested) {
    if (!params.log_sigma_c || !std::isfinite(*params.log_sigma_c)) {
      throw InvalidInputError("loglik: nested model needs finite log_sigma_c");
    }
    if (data.nesting != Nesting::nested) {
      throw InvalidInputError("loglik: dataset is not nested");
    }
  } else {
    if (params.log_sigma_c) {
      throw InvalidInputError("loglik: single-level model cannot carry "
                              "log_sigma_c");
    }
    if (data.nesting != Nesting::single) {
      throw InvalidInputError("loglik: dataset is not single-level");
    }
  }
}

}  // namespace

double loglik_single(const ClmmParams& params, const OrdinalDataset& data,
                     const QuadratureRule& rule) {
  check_params_against(params, data, false);
  ClmmObjective objective(data, params.link, rule);
  return objective.loglik_checked(pack_working(params));
}

double loglik_nested(const ClmmParams& params, const OrdinalDataset& data,
                     const QuadratureRule& rule) {
  check_params_against(params, data, true);
  ClmmObjective objective(data, params.link, rule);
  return objective.loglik_checked(pack_working(params));
}

Eigen::VectorXd loglik_gradient(const ClmmParams& params,
                                const OrdinalDataset& data,
                                const QuadratureRule& rule) {
  check_params_against(params, data, data.nesting == Nesting::nested);
  ClmmObjective objective(data, params.link, rule);
  return objective.loglik_gradient_checked(pack_working(params));
}

}  // namespace ordicc
