#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ordicc/estimation.hpp"
#include "ordicc/icc.hpp"
#include "ordicc/lmm.hpp"

namespace ordicc {

inline constexpr int kReportSchemaVersion = 1;

// One model's slice of a run report; a failed fit keeps fitted == false and
// the error text, everything else stays at its empty default.
struct ModelReport {
  std::string model;  // clmm_probit | clmm_logistic | naive_lmm
  bool fitted = false;
  std::string error;
  bool converged = false;
  bool degenerate = false;
  double icc = 0.0;
  std::optional<Interval> ci;
  std::string ci_method = "none";
  double loglik = 0.0;
  int n_iterations = 0;
  std::string gradient_method;  // CLMMs record how gradients were computed
  int n_obs = 0;
  int n_clusters = 0;
  std::optional<int> n_ears;
  double sigma_b_sq = 0.0;
  std::optional<double> sigma_c_sq;
  std::optional<double> sigma_eps_sq;  // naive model only
  std::vector<double> thresholds;
  std::vector<std::string> coef_names;
  std::vector<double> coef_values;
};

struct RunReport {
  std::string command;  // "fit"
  std::string input;    // file path or config digest
  double level = 0.95;
  std::optional<std::uint64_t> seed;
  std::vector<ModelReport> models;
};

ModelReport model_report(const ClmmFit& fit, const IccEstimate& icc,
                         const std::vector<std::string>& covariate_names);
ModelReport model_report(const LmmFit& fit, const IccEstimate& icc,
                         const std::vector<std::string>& covariate_names);
ModelReport failed_model_report(const std::string& model,
                                const std::string& error);

// Non-finite numerics serialize as explicit nulls.
nlohmann::ordered_json to_json(const RunReport& report);
std::string render_text(const RunReport& report);

}  // namespace ordicc
