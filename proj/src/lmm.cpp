#include "ordicc/lmm.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ordicc/distributions.hpp"

namespace ordicc {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

// Variance-component indices in the reported order.
enum VarComp { kB = 0, kC = 1, kE = 2 };

struct LmmData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // intercept column first
  std::vector<ClusterLayout::Span> clusters;
  std::vector<std::vector<ClusterLayout::Span>> ears;  // empty when single
  bool nested = false;
  int n_ears = 0;
};

LmmData build_lmm_data(const OrdinalDataset& data,
                       const LmmOptions& options) {
  const auto violations = validate(data);
  if (!violations.empty()) {
    throw InvalidInputError("fit_lmm: invalid dataset: " +
                            violations.front().where + ": " +
                            violations.front().message);
  }
  Eigen::VectorXd codes;
  if (options.code_values) {
    if (options.code_values->size() != data.n_categories) {
      throw InvalidInputError("fit_lmm: code_values must have one entry per "
                              "category");
    }
    codes = *options.code_values;
  } else {
    codes = Eigen::VectorXd::LinSpaced(data.n_categories, 1.0,
                                       static_cast<double>(data.n_categories));
  }

  const ClusterLayout layout = cluster_layout(data);
  const int n = data.n_obs();
  const int p = data.n_covariates();

  LmmData out;
  out.nested = data.nesting == Nesting::nested;
  out.y.resize(n);
  out.x.resize(n, p + 1);
  for (int pos = 0; pos < n; ++pos) {
    const int i = layout.order[pos];
    out.y[pos] = codes[data.categories[i] - 1];
    out.x(pos, 0) = 1.0;
    out.x.row(pos).tail(p) = data.covariates.row(i);
  }
  out.clusters = layout.clusters;
  out.ears = layout.ears;
  for (const auto& ear_list : layout.ears) {
    out.n_ears += static_cast<int>(ear_list.size());
  }
  return out;
}

// Profiled ML log likelihood and (optionally) its gradient with respect to
// the variance components (sigma_b^2 [, sigma_c^2], sigma_eps^2). beta is
// profiled out by GLS; the envelope theorem makes its derivative vanish.
// Non-finite or non-PD inputs yield -inf.
double profile_value(const LmmData& d, double vb, double vc, double ve,
                     Eigen::VectorXd* grad_out,
                     Eigen::VectorXd* beta_out = nullptr) {
  if (!(ve > 0.0) || vb < 0.0 || vc < 0.0 || !std::isfinite(vb) ||
      !std::isfinite(vc) || !std::isfinite(ve)) {
    return -std::numeric_limits<double>::infinity();
  }
  const int n = static_cast<int>(d.y.size());
  const int q = static_cast<int>(d.x.cols());
  const int n_comp = d.nested ? 3 : 2;

  Eigen::MatrixXd xwx = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd xwy = Eigen::VectorXd::Zero(q);
  double ywy = 0.0;
  double logdet = 0.0;

  // per-cluster pieces reused by the gradient pass
  std::vector<Eigen::VectorXd> wy_store;
  std::vector<Eigen::MatrixXd> wx_store;
  std::vector<double> tr_w(d.clusters.size(), 0.0);
  std::vector<double> sum_w(d.clusters.size(), 0.0);
  std::vector<double> sum_w_ears(d.clusters.size(), 0.0);
  if (grad_out) {
    wy_store.resize(d.clusters.size());
    wx_store.resize(d.clusters.size());
  }

  Eigen::MatrixXd v;
  for (std::size_t c = 0; c < d.clusters.size(); ++c) {
    const auto span = d.clusters[c];
    const int m = span.end - span.begin;
    v = Eigen::MatrixXd::Constant(m, m, vb);
    v.diagonal().array() += ve;
    if (d.nested) {
      for (const auto& ear : d.ears[c]) {
        v.block(ear.begin - span.begin, ear.begin - span.begin,
                ear.end - ear.begin, ear.end - ear.begin)
            .array() += vc;
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) {
      return -std::numeric_limits<double>::infinity();
    }
    logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();

    const auto yc = d.y.segment(span.begin, m);
    const auto xc = d.x.middleRows(span.begin, m);
    Eigen::VectorXd wy = llt.solve(yc);
    Eigen::MatrixXd wx = llt.solve(xc);
    xwx.noalias() += xc.transpose() * wx;
    xwy.noalias() += xc.transpose() * wy;
    ywy += yc.dot(wy);

    if (grad_out) {
      Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(m, m));
      tr_w[c] = w.trace();
      sum_w[c] = w.sum();
      if (d.nested) {
        double acc = 0.0;
        for (const auto& ear : d.ears[c]) {
          acc += w.block(ear.begin - span.begin, ear.begin - span.begin,
                         ear.end - ear.begin, ear.end - ear.begin)
                     .sum();
        }
        sum_w_ears[c] = acc;
      }
      wy_store[c] = std::move(wy);
      wx_store[c] = std::move(wx);
    }
  }

  Eigen::LDLT<Eigen::MatrixXd> xwx_ldlt(xwx);
  if (xwx_ldlt.info() != Eigen::Success) {
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd beta = xwx_ldlt.solve(xwy);
  if (beta_out) *beta_out = beta;
  const double quad = ywy - 2.0 * beta.dot(xwy) + beta.dot(xwx * beta);
  const double loglik = -0.5 * (logdet + quad + n * kLog2Pi);

  if (grad_out) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_comp);
    for (std::size_t c = 0; c < d.clusters.size(); ++c) {
      const Eigen::VectorXd wr = wy_store[c] - wx_store[c] * beta;
      const double sum_wr = wr.sum();
      // d loglik / d v = -0.5 (tr(W J) - r' W J W r) per component
      g[kB] += -0.5 * (sum_w[c] - sum_wr * sum_wr);
      if (d.nested) {
        const auto span = d.clusters[c];
        double tr_term = 0.0, quad_term = 0.0;
        for (const auto& ear : d.ears[c]) {
          const double s =
              wr.segment(ear.begin - span.begin, ear.end - ear.begin).sum();
          quad_term += s * s;
        }
        tr_term = sum_w_ears[c];
        g[kC] += -0.5 * (tr_term - quad_term);
      }
      g[d.nested ? kE : 1] += -0.5 * (tr_w[c] - wr.squaredNorm());
    }
    *grad_out = g;
  }
  return loglik;
}

// Objective over free log-variance components; components can be pinned to
// zero (boundary refits).
class LogVarObjective final : public Objective {
 public:
  LogVarObjective(const LmmData& d, bool b_free, bool c_free)
      : d_(d), b_free_(b_free), c_free_(c_free) {}

  int dim() const override {
    return 1 + (b_free_ ? 1 : 0) + ((d_.nested && c_free_) ? 1 : 0);
  }

  void unpack(const Eigen::VectorXd& phi, double& vb, double& vc,
              double& ve) const {
    int j = 0;
    vb = b_free_ ? std::exp(phi[j++]) : 0.0;
    vc = d_.nested ? (c_free_ ? std::exp(phi[j++]) : 0.0) : 0.0;
    ve = std::exp(phi[j]);
  }

  double value(const Eigen::VectorXd& phi) override {
    double vb, vc, ve;
    unpack(phi, vb, vc, ve);
    return -profile_value(d_, vb, vc, ve, nullptr);
  }

  double value_and_gradient(const Eigen::VectorXd& phi,
                            Eigen::VectorXd& gradient) override {
    double vb, vc, ve;
    unpack(phi, vb, vc, ve);
    Eigen::VectorXd g_var;
    const double loglik = profile_value(d_, vb, vc, ve, &g_var);
    gradient.resize(dim());
    if (!std::isfinite(loglik)) {
      gradient.setConstant(std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::infinity();
    }
    int j = 0;
    if (b_free_) gradient[j++] = -g_var[kB] * vb;           // chain: v = e^phi
    if (d_.nested && c_free_) gradient[j++] = -g_var[kC] * vc;
    gradient[j] = -g_var[d_.nested ? kE : 1] * ve;
    return -loglik;
  }

 private:
  const LmmData& d_;
  bool b_free_;
  bool c_free_;
};

struct Candidate {
  double vb = 0.0, vc = 0.0, ve = 1.0;
  double loglik = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int n_iterations = 0;
  bool b_zero = false, c_zero = false;
  std::string message;
};

// BFGS stops anywhere inside its gradient-tolerance basin, and the exact
// stopping point depends on the path taken there, which in turn depends on
// the scale of the response. Damped Newton steps on the analytic gradient
// (finite-difference Hessian) pin the stationary point down to rounding
// error, so affinely recoded responses land on the same variance ratios.
void polish_stationary_point(LogVarObjective& objective, Eigen::VectorXd& phi,
                             double& f) {
  const int dim = objective.dim();
  Eigen::VectorXd g(dim);
  double f_cur = objective.value_and_gradient(phi, g);
  if (!std::isfinite(f_cur)) return;
  for (int step = 0; step < 6; ++step) {
    if (g.cwiseAbs().maxCoeff() <= 1e-10) break;
    Eigen::MatrixXd hessian(dim, dim);
    bool usable = true;
    for (int j = 0; j < dim && usable; ++j) {
      const double h = 3e-6 * std::max(1.0, std::abs(phi[j]));
      Eigen::VectorXd probe = phi;
      Eigen::VectorXd g_hi(dim), g_lo(dim);
      probe[j] = phi[j] + h;
      usable = std::isfinite(objective.value_and_gradient(probe, g_hi));
      probe[j] = phi[j] - h;
      usable =
          usable && std::isfinite(objective.value_and_gradient(probe, g_lo));
      hessian.col(j) = (g_hi - g_lo) / (2.0 * h);
    }
    if (!usable) break;
    hessian = 0.5 * (hessian + hessian.transpose()).eval();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::VectorXd trial = phi - ldlt.solve(g);
    Eigen::VectorXd g_trial(dim);
    const double f_trial = objective.value_and_gradient(trial, g_trial);
    // accept only while the gradient keeps shrinking; the floor is rounding
    // noise in the accumulated per-cluster terms
    if (!std::isfinite(f_trial) ||
        g_trial.cwiseAbs().maxCoeff() >= g.cwiseAbs().maxCoeff()) {
      break;
    }
    phi = trial;
    f_cur = f_trial;
    g = g_trial;
  }
  f = f_cur;
}

Candidate run_candidate(const LmmData& d, const LmmOptions& options,
                        bool b_free, bool c_free, double v_total) {
  LogVarObjective objective(d, b_free, c_free);
  const int n_free = objective.dim();
  // even split of the response variance across the free components
  Eigen::VectorXd phi =
      Eigen::VectorXd::Constant(n_free, std::log(v_total / (n_free + 0.0)));
  const OptimResult res = minimize_bfgs(objective, phi, options.optim);
  Eigen::VectorXd phi_hat = res.x;
  double f_hat = res.f;
  polish_stationary_point(objective, phi_hat, f_hat);
  Candidate cand;
  objective.unpack(phi_hat, cand.vb, cand.vc, cand.ve);
  cand.loglik = -f_hat;
  cand.converged = res.converged;
  cand.n_iterations = res.n_iterations;
  cand.b_zero = !b_free;
  cand.c_zero = !c_free;
  cand.message = res.message;
  return cand;
}

}  // namespace

double lmm_profile_loglik(const OrdinalDataset& data,
                          const Eigen::VectorXd& variance_components,
                          const LmmOptions& options) {
  const LmmData d = build_lmm_data(data, options);
  const int expected = d.nested ? 3 : 2;
  if (variance_components.size() != expected) {
    throw InvalidInputError("lmm_profile_loglik: expected (sigma_b_sq" +
                            std::string(d.nested ? ", sigma_c_sq" : "") +
                            ", sigma_eps_sq)");
  }
  const double vb = variance_components[0];
  const double vc = d.nested ? variance_components[1] : 0.0;
  const double ve = variance_components[expected - 1];
  return profile_value(d, vb, vc, ve, nullptr);
}

LmmFit fit_lmm(const OrdinalDataset& data, const LmmOptions& options) {
  const LmmData d = build_lmm_data(data, options);
  const int n = static_cast<int>(d.y.size());

  const double mean_y = d.y.mean();
  const double v_total =
      std::max((d.y.array() - mean_y).square().sum() / std::max(n - 1, 1),
               1e-8);

  Candidate best = run_candidate(d, options, true, true, v_total);
  // Interior estimates drifting to the edge are re-fit with the component
  // pinned at zero; the boundary value is reported when it is at least as
  // good (parsimony at ties).
  const double rel_floor = 1e-6 * (best.vb + best.vc + best.ve);
  const bool try_b0 = best.vb < rel_floor || !best.converged;
  const bool try_c0 = d.nested && (best.vc < rel_floor || !best.converged);
  std::vector<Candidate> candidates;
  if (try_b0) candidates.push_back(run_candidate(d, options, false, true,
                                                 v_total));
  if (try_c0) candidates.push_back(run_candidate(d, options, true, false,
                                                 v_total));
  if (try_b0 && try_c0) {
    candidates.push_back(run_candidate(d, options, false, false, v_total));
  }
  for (const auto& cand : candidates) {
    if (cand.loglik >= best.loglik - 1e-9) best = cand;
  }

  LmmFit fit;
  fit.sigma_b_sq = best.b_zero ? 0.0 : best.vb;
  if (d.nested) fit.sigma_c_sq = best.c_zero ? 0.0 : best.vc;
  fit.sigma_eps_sq = best.ve;
  fit.loglik = best.loglik;
  fit.converged = best.converged;
  fit.boundary_sigma_b = best.b_zero;
  fit.boundary_sigma_c = d.nested && best.c_zero;
  fit.n_iterations = best.n_iterations;
  fit.n_obs = n;
  fit.n_clusters = static_cast<int>(d.clusters.size());
  fit.n_ears = d.n_ears;
  fit.message = best.message;

  Eigen::VectorXd beta;
  profile_value(d, fit.sigma_b_sq, fit.sigma_c_sq.value_or(0.0),
                fit.sigma_eps_sq, nullptr, &beta);
  fit.beta_hat = beta;

  if (options.compute_vcov) {
    // Observed information of the profiled likelihood in the variance
    // parameterization, by central differences of the analytic gradient; at
    // a zero boundary the stencil is shifted inward (one-sided information).
    const int n_comp = d.nested ? 3 : 2;
    Eigen::VectorXd v(n_comp);
    v[0] = fit.sigma_b_sq;
    if (d.nested) v[1] = *fit.sigma_c_sq;
    v[n_comp - 1] = fit.sigma_eps_sq;

    Eigen::MatrixXd hessian(n_comp, n_comp);
    bool ok = true;
    for (int j = 0; j < n_comp && ok; ++j) {
      const double h = options.vcov_step * std::max(v[j], 0.05 * fit.sigma_eps_sq);
      Eigen::VectorXd lo = v, hi = v;
      if (v[j] - h < 0.0) {
        lo[j] = v[j];
        hi[j] = v[j] + 2.0 * h;
      } else {
        lo[j] = v[j] - h;
        hi[j] = v[j] + h;
      }
      Eigen::VectorXd g_hi, g_lo;
      const double f_hi = profile_value(d, hi[0], d.nested ? hi[1] : 0.0,
                                        hi[n_comp - 1], &g_hi);
      const double f_lo = profile_value(d, lo[0], d.nested ? lo[1] : 0.0,
                                        lo[n_comp - 1], &g_lo);
      if (!std::isfinite(f_hi) || !std::isfinite(f_lo)) {
        ok = false;
        break;
      }
      hessian.col(j) = (g_hi - g_lo) / (hi[j] - lo[j]);
    }
    if (ok) {
      hessian = 0.5 * (hessian + hessian.transpose()).eval();
      Eigen::LLT<Eigen::MatrixXd> llt(-hessian);
      if (llt.info() == Eigen::Success) {
        fit.vcov_varcomp =
            llt.solve(Eigen::MatrixXd::Identity(n_comp, n_comp));
        fit.vcov_available = true;
      }
    }
    if (!fit.vcov_available) {
      fit.vcov_varcomp = Eigen::MatrixXd::Zero(n_comp, n_comp);
    }
  }
  return fit;
}

}  // namespace ordicc
