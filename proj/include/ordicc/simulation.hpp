#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ordicc/csv.hpp"
#include "ordicc/dataset.hpp"
#include "ordicc/icc.hpp"

namespace ordicc {

// One simulation scenario. Defaults follow the balanced designs: 35
// clusters of 5 observations (or 35 subjects x 2 ears x 5), one N(0,1)
// covariate with unit slope, latent variances 4 (single) or 2+2 (nested),
// unit error variance, discretization over even integers.
struct SimConfig {
  Nesting design = Nesting::single;
  int n_subjects = 35;
  int n_ears = 2;  // nested designs only
  int n_obs = 5;   // per cluster (per ear when nested)
  double beta_star = 1.0;
  double sigma_b_star_sq = 4.0;
  std::optional<double> sigma_c_star_sq;  // engaged for nested designs
  ErrorFamily error_family = ErrorFamily::normal;
  double error_variance = 1.0;
  CutpointLattice lattice{};
  int n_replicates = 1000;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
};

// Throws InvalidInputError naming the offending field.
void validate_config(const SimConfig& config);

SimConfig single_level_config(ErrorFamily family, std::uint64_t seed);
SimConfig nested_config(ErrorFamily family, std::uint64_t seed);

double true_icc(const SimConfig& config);

// A generated replicate: the file-shaped view (latent measurement plus the
// canonical category codes) and the dataset ready to fit. Outcomes that
// collapse below two categories are regenerated on a bumped substream;
// n_attempts counts every draw made.
struct GeneratedReplicate {
  CsvDataset csv;
  OrdinalDataset dataset;
  int n_attempts = 1;
};

GeneratedReplicate generate_replicate(const SimConfig& config,
                                      std::uint64_t replicate);
OrdinalDataset generate_dataset(const SimConfig& config,
                                std::uint64_t replicate);

enum class Estimator { probit, logistic, naive };
const char* estimator_name(Estimator estimator);

struct EstimateRecord {
  Estimator estimator = Estimator::probit;
  bool has_estimate = false;
  double icc = 0.0;
  std::optional<Interval> ci;
  bool converged = false;
  bool degenerate = false;
  std::string error;  // nonempty when the fit threw
};

struct ReplicateOutcome {
  std::uint64_t replicate = 0;
  int n_attempts = 1;
  std::array<EstimateRecord, 3> records;  // probit, logistic, naive
};

// Fits all three estimators on one generated dataset. Estimator failures
// are recorded in place, never thrown.
ReplicateOutcome run_replicate(const SimConfig& config,
                               std::uint64_t replicate);

struct EstimatorSummary {
  Estimator estimator = Estimator::probit;
  int n_estimates = 0;   // replicates contributing to bias/sd
  double bias = 0.0;     // NaN when n_estimates == 0
  double sd = 0.0;       // NaN when n_estimates < 2
  double coverage = 0.0; // over available CIs only; NaN when none
  int n_ci_available = 0;
  int n_ci_unavailable = 0;
  int n_nonconverged = 0;
};

struct SimSummary {
  double true_icc_value = 0.0;
  int n_replicates = 0;
  int n_regenerated = 0;  // extra generation attempts across replicates
  std::array<EstimatorSummary, 3> estimators;
};

SimSummary summarize(const std::vector<ReplicateOutcome>& outcomes,
                     double true_icc_value);

// Replicates are independent; results land in a preallocated slot per
// replicate index, so the outcome is identical for any thread count.
std::vector<ReplicateOutcome> run_replicates(const SimConfig& config,
                                             int n_threads);
SimSummary run_simulation(const SimConfig& config, int n_threads);

void write_summary_csv(std::ostream& out, const SimConfig& config,
                       const SimSummary& summary);
void write_replicates_csv(std::ostream& out,
                          const std::vector<ReplicateOutcome>& outcomes);

}  // namespace ordicc
