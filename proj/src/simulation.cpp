#include "ordicc/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "ordicc/errors.hpp"
#include "ordicc/estimation.hpp"
#include "ordicc/lmm.hpp"
#include "ordicc/rng.hpp"

namespace ordicc {
namespace {

constexpr int kMaxGenerationAttempts = 100;
constexpr double kPi = 3.14159265358979323846;

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

std::string padded_id(const char* prefix, int index, int width) {
  std::ostringstream out;
  out << prefix << std::setw(width) << std::setfill('0') << index;
  return out.str();
}

int id_width(int n) {
  int width = 1;
  while (n >= 10) {
    n /= 10;
    ++width;
  }
  return std::max(width, 3);
}

void check(bool ok, const char* field, const char* what) {
  if (!ok) {
    throw InvalidInputError(std::string("simulation config: ") + field +
                            " " + what);
  }
}

void validate_generation(const SimConfig& c) {
  check(c.n_subjects >= 2, "n_subjects", "must be at least 2");
  check(c.n_obs >= 1, "n_obs", "must be at least 1");
  check(std::isfinite(c.beta_star), "beta_star", "must be finite");
  check(std::isfinite(c.sigma_b_star_sq) && c.sigma_b_star_sq >= 0.0,
        "sigma_b_star_sq", "must be finite and nonnegative");
  check(std::isfinite(c.error_variance) && c.error_variance >= 0.0,
        "error_variance", "must be finite and nonnegative");
  check(std::isfinite(c.lattice.anchor), "lattice.anchor", "must be finite");
  check(std::isfinite(c.lattice.spacing) && c.lattice.spacing > 0.0,
        "lattice.spacing", "must be positive");
  if (c.design == Nesting::nested) {
    check(c.n_ears >= 2, "n_ears", "must be at least 2 for nested designs");
    check(c.sigma_c_star_sq.has_value(), "sigma_c_star_sq",
          "is required for nested designs");
    check(std::isfinite(*c.sigma_c_star_sq) && *c.sigma_c_star_sq >= 0.0,
          "sigma_c_star_sq", "must be finite and nonnegative");
  } else {
    check(!c.sigma_c_star_sq.has_value(), "sigma_c_star_sq",
          "applies to nested designs only");
  }
}

// Deterministic draw order: per subject, the subject effect first, then (per
// ear, its effect, then) per observation the covariate and the error.
CsvDataset draw_latent(const SimConfig& c, SplitMix64& rng) {
  const bool nested = c.design == Nesting::nested;
  const int ears = nested ? c.n_ears : 1;
  const int n = c.n_subjects * ears * c.n_obs;
  const double sd_b = std::sqrt(c.sigma_b_star_sq);
  const double sd_c = nested ? std::sqrt(*c.sigma_c_star_sq) : 0.0;
  const double err_scale = c.error_family == ErrorFamily::normal
                               ? std::sqrt(c.error_variance)
                               : std::sqrt(3.0 * c.error_variance) / kPi;
  const int width = id_width(c.n_subjects);

  CsvDataset csv;
  csv.covariate_names = {"x1"};
  csv.covariates.resize(n, 1);
  csv.subject_ids.reserve(n);
  csv.ear_ids.reserve(n);
  csv.measurements.reserve(n);

  int row = 0;
  for (int i = 0; i < c.n_subjects; ++i) {
    const std::string subject = padded_id("s", i + 1, width);
    const double b = sd_b * rng.normal();
    for (int e = 0; e < ears; ++e) {
      const std::string ear =
          nested ? subject + "e" + std::to_string(e + 1) : std::string();
      const double ce = nested ? sd_c * rng.normal() : 0.0;
      for (int j = 0; j < c.n_obs; ++j) {
        const double x = rng.normal();
        const double eps = c.error_family == ErrorFamily::normal
                               ? err_scale * rng.normal()
                               : rng.logistic(err_scale);
        csv.subject_ids.push_back(subject);
        csv.ear_ids.push_back(ear);
        csv.measurements.push_back(c.beta_star * x + b + ce + eps);
        csv.covariates(row, 0) = x;
        ++row;
      }
    }
  }
  csv.categories.resize(n);  // filled after discretization
  return csv;
}

std::string sanitize_field(std::string text) {
  std::replace(text.begin(), text.end(), ',', ';');
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

void write_value(std::ostream& out, double value) {
  if (!std::isfinite(value)) {
    out << "NA";
    return;
  }
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  out.write(buf, ptr - buf);
}

// Working-scale parameters rescale linearly across links; reusing a probit
// optimum (times pi/sqrt(3)) warm-starts the logistic fit.
Eigen::VectorXd rescale_theta(const Eigen::VectorXd& theta, int n_categories,
                              int n_covariates, bool nested, double factor) {
  Eigen::VectorXd out = theta;
  const double log_factor = std::log(factor);
  out[0] *= factor;
  for (int j = 1; j < n_categories - 1; ++j) out[j] += log_factor;
  out.segment(n_categories - 1, n_covariates) *= factor;
  out[n_categories - 1 + n_covariates] += log_factor;
  if (nested) out[n_categories + n_covariates] += log_factor;
  return out;
}

}  // namespace

void validate_config(const SimConfig& config) {
  validate_generation(config);
  check(config.sigma_b_star_sq > 0.0 ||
            config.sigma_c_star_sq.value_or(0.0) > 0.0,
        "sigma_b_star_sq", "must give positive between-cluster variance");
  check(config.error_variance > 0.0, "error_variance", "must be positive");
  check(config.n_replicates >= 1, "n_replicates", "must be at least 1");
  check(config.ci_level > 0.0 && config.ci_level < 1.0, "ci_level",
        "must lie in (0, 1)");
}

SimConfig single_level_config(ErrorFamily family, std::uint64_t seed) {
  SimConfig config;
  config.design = Nesting::single;
  config.sigma_b_star_sq = 4.0;
  config.error_family = family;
  config.seed = seed;
  return config;
}

SimConfig nested_config(ErrorFamily family, std::uint64_t seed) {
  SimConfig config;
  config.design = Nesting::nested;
  config.sigma_b_star_sq = 2.0;
  config.sigma_c_star_sq = 2.0;
  config.error_family = family;
  config.seed = seed;
  return config;
}

double true_icc(const SimConfig& config) {
  const double re = config.sigma_b_star_sq +
                    config.sigma_c_star_sq.value_or(0.0);
  return re / (re + config.error_variance);
}

GeneratedReplicate generate_replicate(const SimConfig& config,
                                      std::uint64_t replicate) {
  validate_generation(config);
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    SplitMix64 rng = replicate_stream(config.seed, replicate,
                                      static_cast<std::uint64_t>(attempt));
    GeneratedReplicate gen;
    gen.csv = draw_latent(config, rng);

    RawObservations raw;
    raw.subject_ids = gen.csv.subject_ids;
    if (config.design == Nesting::nested) raw.ear_ids = gen.csv.ear_ids;
    raw.covariates = gen.csv.covariates;
    raw.covariate_names = gen.csv.covariate_names;
    raw.cells.resize(gen.csv.n_rows());
    for (int i = 0; i < gen.csv.n_rows(); ++i) {
      raw.cells[i] = discretize(gen.csv.measurements[i], config.lattice);
    }
    try {
      gen.dataset = canonicalize(raw, config.design);
    } catch (const DegenerateOutcomeError&) {
      continue;  // bump the substream and redraw
    }
    for (int i = 0; i < gen.csv.n_rows(); ++i) {
      gen.csv.categories[i] = gen.dataset.categories[i];
    }
    gen.n_attempts = attempt + 1;
    return gen;
  }
  std::ostringstream msg;
  msg << "replicate " << replicate << " produced fewer than two categories "
      << "in " << kMaxGenerationAttempts << " attempts";
  throw DegenerateOutcomeError(msg.str());
}

OrdinalDataset generate_dataset(const SimConfig& config,
                                std::uint64_t replicate) {
  return generate_replicate(config, replicate).dataset;
}

const char* estimator_name(Estimator estimator) {
  switch (estimator) {
    case Estimator::probit: return "probit";
    case Estimator::logistic: return "logistic";
    case Estimator::naive: return "naive";
  }
  return "unknown";
}

ReplicateOutcome run_replicate(const SimConfig& config,
                               std::uint64_t replicate) {
  ReplicateOutcome out;
  out.replicate = replicate;
  out.records[0].estimator = Estimator::probit;
  out.records[1].estimator = Estimator::logistic;
  out.records[2].estimator = Estimator::naive;
  for (auto& rec : out.records) rec.icc = quiet_nan();

  OrdinalDataset data;
  try {
    GeneratedReplicate gen = generate_replicate(config, replicate);
    out.n_attempts = gen.n_attempts;
    data = std::move(gen.dataset);
  } catch (const std::exception& err) {
    for (auto& rec : out.records) rec.error = err.what();
    return out;
  }

  const bool nested = config.design == Nesting::nested;
  std::optional<Eigen::VectorXd> probit_theta;

  for (int which = 0; which < 2; ++which) {
    const Link link = which == 0 ? Link::probit : Link::logistic;
    EstimateRecord& rec = out.records[which];
    try {
      FitOptions options;
      options.compute_vcov = nested;  // single-level CIs come from profiling
      if (link == Link::logistic && probit_theta) {
        options.start = rescale_theta(*probit_theta, data.n_categories,
                                      data.n_covariates(), nested,
                                      kPi / std::sqrt(3.0));
      }
      const ClmmFit fit = fit_clmm(data, link, options);
      if (link == Link::probit && fit.converged) probit_theta = fit.theta;
      rec.converged = fit.converged;

      IccEstimate est;
      if (nested) {
        est = icc_with_delta_ci(fit, config.ci_level);
      } else {
        const ProfileCi profile =
            profile_ci_sigma_b(data, link, fit, config.ci_level, options);
        est = icc_with_profile_ci(fit, profile, config.ci_level);
      }
      rec.degenerate = est.degenerate;
      if (std::isfinite(est.value)) {
        rec.icc = est.value;
        rec.has_estimate = true;
      }
      rec.ci = est.ci;
    } catch (const std::exception& err) {
      rec.error = err.what();
    }
  }

  EstimateRecord& naive = out.records[2];
  try {
    const LmmFit fit = fit_lmm(data, {});
    naive.converged = fit.converged;
    const IccEstimate est = icc_with_delta_ci(fit, config.ci_level);
    if (std::isfinite(est.value)) {
      naive.icc = est.value;
      naive.has_estimate = true;
    }
    naive.ci = est.ci;
  } catch (const std::exception& err) {
    naive.error = err.what();
  }
  return out;
}

SimSummary summarize(const std::vector<ReplicateOutcome>& outcomes,
                     double true_icc_value) {
  SimSummary summary;
  summary.true_icc_value = true_icc_value;
  summary.n_replicates = static_cast<int>(outcomes.size());
  for (const auto& outcome : outcomes) {
    summary.n_regenerated += outcome.n_attempts - 1;
  }
  for (int which = 0; which < 3; ++which) {
    EstimatorSummary& est = summary.estimators[which];
    est.estimator = static_cast<Estimator>(which);
    double sum = 0.0;
    int n_covered = 0;
    for (const auto& outcome : outcomes) {
      const EstimateRecord& rec = outcome.records[which];
      if (rec.has_estimate) {
        ++est.n_estimates;
        sum += rec.icc;
      }
      if (!rec.converged) ++est.n_nonconverged;
      if (rec.ci) {
        ++est.n_ci_available;
        if (rec.ci->lower <= true_icc_value &&
            true_icc_value <= rec.ci->upper) {
          ++n_covered;
        }
      } else {
        ++est.n_ci_unavailable;
      }
    }
    const double mean =
        est.n_estimates > 0 ? sum / est.n_estimates : quiet_nan();
    est.bias = est.n_estimates > 0 ? mean - true_icc_value : quiet_nan();
    if (est.n_estimates >= 2) {
      double ss = 0.0;
      for (const auto& outcome : outcomes) {
        const EstimateRecord& rec = outcome.records[which];
        if (rec.has_estimate) ss += (rec.icc - mean) * (rec.icc - mean);
      }
      est.sd = std::sqrt(ss / (est.n_estimates - 1));
    } else {
      est.sd = quiet_nan();
    }
    est.coverage = est.n_ci_available > 0
                       ? static_cast<double>(n_covered) / est.n_ci_available
                       : quiet_nan();
  }
  return summary;
}

std::vector<ReplicateOutcome> run_replicates(const SimConfig& config,
                                             int n_threads) {
  validate_config(config);
  const int n = config.n_replicates;
  std::vector<ReplicateOutcome> outcomes(n);
  n_threads = std::clamp(n_threads, 1, n);
  if (n_threads == 1) {
    for (int r = 0; r < n; ++r) {
      outcomes[r] = run_replicate(config, static_cast<std::uint64_t>(r));
    }
    return outcomes;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    workers.emplace_back([&] {
      for (int r = next.fetch_add(1); r < n; r = next.fetch_add(1)) {
        outcomes[r] = run_replicate(config, static_cast<std::uint64_t>(r));
      }
    });
  }
  for (auto& worker : workers) worker.join();
  return outcomes;
}

SimSummary run_simulation(const SimConfig& config, int n_threads) {
  return summarize(run_replicates(config, n_threads), true_icc(config));
}

void write_summary_csv(std::ostream& out, const SimConfig& config,
                       const SimSummary& summary) {
  out << "design,error_family,estimator,bias,sd,coverage,n_ci_unavailable,"
         "n_nonconverged,seed\n";
  const char* design = config.design == Nesting::nested ? "nested" : "single";
  const char* family =
      config.error_family == ErrorFamily::logistic ? "logistic" : "normal";
  for (const auto& est : summary.estimators) {
    out << design << ',' << family << ',' << estimator_name(est.estimator)
        << ',';
    write_value(out, est.bias);
    out << ',';
    write_value(out, est.sd);
    out << ',';
    write_value(out, est.coverage);
    out << ',' << est.n_ci_unavailable << ',' << est.n_nonconverged << ','
        << config.seed << '\n';
  }
}

void write_replicates_csv(std::ostream& out,
                          const std::vector<ReplicateOutcome>& outcomes) {
  out << "replicate,estimator,icc,ci_lower,ci_upper,converged,degenerate,"
         "error\n";
  for (const auto& outcome : outcomes) {
    for (const auto& rec : outcome.records) {
      out << outcome.replicate << ',' << estimator_name(rec.estimator) << ',';
      write_value(out, rec.has_estimate ? rec.icc : quiet_nan());
      out << ',';
      write_value(out, rec.ci ? rec.ci->lower : quiet_nan());
      out << ',';
      write_value(out, rec.ci ? rec.ci->upper : quiet_nan());
      out << ',' << (rec.converged ? 1 : 0) << ',' << (rec.degenerate ? 1 : 0)
          << ',' << sanitize_field(rec.error) << '\n';
    }
  }
}

}  // namespace ordicc
