#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ordicc/errors.hpp"

namespace ordicc {

enum class ErrorFamily { normal, logistic };

enum class Nesting { single, nested };

// Parameters of the latent linear mixed model on the original scale.
struct LatentParams {
  Eigen::VectorXd beta_star;
  double sigma_b_star_sq = 0.0;
  std::optional<double> sigma_c_star_sq;  // engaged for subject/ear designs
  double sigma_eps_star_sq = 1.0;
  ErrorFamily error_family = ErrorFamily::normal;
};

// Throws InvalidInputError unless variances are positive and finite and
// beta_star is finite.
void validate_params(const LatentParams& params);

// Evenly spaced discretization grid: cell n is the right-closed interval
// ( (n-1)*spacing + anchor, n*spacing + anchor ].
struct CutpointLattice {
  double anchor = 0.0;
  double spacing = 2.0;
};

// Cell index of a latent value; monotone in y_star.
std::int64_t discretize(double y_star, const CutpointLattice& lattice);

// Strictly increasing thresholds xi_1 < ... < xi_{K-1} on the working scale.
struct ThresholdSet {
  Eigen::VectorXd xi;

  int n_categories() const { return static_cast<int>(xi.size()) + 1; }
  bool valid() const;
};

// Observations before category codes are canonicalized. Parallel columns;
// ear_ids may be empty for single-level data.
struct RawObservations {
  std::vector<std::string> subject_ids;
  std::vector<std::string> ear_ids;
  std::vector<std::int64_t> cells;
  Eigen::MatrixXd covariates;  // n x p, p may be 0
  std::vector<std::string> covariate_names;
};

// Canonical ordinal dataset: categories are coded 1..K with every code
// observed at least once, covariates are finite, and (for nested data) each
// ear id belongs to exactly one subject.
struct OrdinalDataset {
  std::vector<std::string> subject_ids;
  std::vector<std::string> ear_ids;  // empty when nesting == single
  std::vector<int> categories;       // 1..K
  Eigen::MatrixXd covariates;
  std::vector<std::string> covariate_names;
  std::vector<std::int64_t> original_cells;  // sorted distinct lattice cells
  int n_categories = 0;
  Nesting nesting = Nesting::single;

  int n_obs() const { return static_cast<int>(categories.size()); }
  int n_covariates() const { return static_cast<int>(covariates.cols()); }
};

// Maps observed cells to consecutive codes 1..K preserving order. Throws
// DegenerateOutcomeError if fewer than two distinct cells are present and
// InvalidInputError on structural problems (mismatched column lengths,
// non-finite covariates, missing ear ids for nested data).
OrdinalDataset canonicalize(const RawObservations& raw, Nesting nesting);

// Observation indices grouped by cluster (and by ear within cluster for
// nested data), clusters and ears in order of first appearance.
struct ClusterLayout {
  struct Span {
    int begin = 0;
    int end = 0;  // half-open range into `order`
  };
  std::vector<int> order;  // permutation of 0..n-1, cluster-contiguous
  std::vector<Span> clusters;
  std::vector<std::string> cluster_ids;
  std::vector<std::vector<Span>> ears;  // per cluster; empty when single
};

ClusterLayout cluster_layout(const OrdinalDataset& data);

struct Violation {
  std::string where;
  std::string message;
};

// Checks every dataset invariant and reports all violations found (empty
// result == valid).
std::vector<Violation> validate(const OrdinalDataset& data);

}  // namespace ordicc
