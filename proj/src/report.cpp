#include "ordicc/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "ordicc/version.hpp"

namespace ordicc {
namespace {

using nlohmann::ordered_json;

ordered_json num_or_null(double value) {
  if (!std::isfinite(value)) return nullptr;
  return value;
}

ordered_json interval_or_null(const std::optional<Interval>& ci) {
  if (!ci) return nullptr;
  return ordered_json{{"lower", num_or_null(ci->lower)},
                      {"upper", num_or_null(ci->upper)}};
}

std::string format_ci(const std::optional<Interval>& ci) {
  if (!ci) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(3) << "[" << ci->lower << ", "
      << ci->upper << "]";
  return out.str();
}

}  // namespace

ModelReport model_report(const ClmmFit& fit, const IccEstimate& icc,
                         const std::vector<std::string>& covariate_names) {
  ModelReport report;
  report.model = icc_method_name(icc.method);
  report.fitted = true;
  report.converged = fit.converged;
  report.degenerate = icc.degenerate;
  report.icc = icc.value;
  report.ci = icc.ci;
  report.ci_method = ci_method_name(icc.ci_method);
  report.loglik = fit.loglik;
  report.n_iterations = fit.n_iterations;
  report.gradient_method = fit.gradient_method;
  report.n_obs = fit.n_obs;
  report.n_clusters = fit.n_clusters;
  if (fit.nested) report.n_ears = fit.n_ears;
  report.sigma_b_sq = fit.sigma_b * fit.sigma_b;
  if (fit.sigma_c) report.sigma_c_sq = *fit.sigma_c * *fit.sigma_c;
  report.thresholds.assign(fit.thresholds.xi.begin(), fit.thresholds.xi.end());
  report.coef_names = covariate_names;
  report.coef_values.assign(fit.beta.begin(), fit.beta.end());
  return report;
}

ModelReport model_report(const LmmFit& fit, const IccEstimate& icc,
                         const std::vector<std::string>& covariate_names) {
  ModelReport report;
  report.model = icc_method_name(icc.method);
  report.fitted = true;
  report.converged = fit.converged;
  report.icc = icc.value;
  report.ci = icc.ci;
  report.ci_method = ci_method_name(icc.ci_method);
  report.loglik = fit.loglik;
  report.n_iterations = fit.n_iterations;
  report.n_obs = fit.n_obs;
  report.n_clusters = fit.n_clusters;
  if (fit.sigma_c_sq) report.n_ears = fit.n_ears;
  report.sigma_b_sq = fit.sigma_b_sq;
  report.sigma_c_sq = fit.sigma_c_sq;
  report.sigma_eps_sq = fit.sigma_eps_sq;
  report.coef_names.reserve(covariate_names.size() + 1);
  report.coef_names.push_back("(intercept)");
  report.coef_names.insert(report.coef_names.end(), covariate_names.begin(),
                           covariate_names.end());
  report.coef_values.assign(fit.beta_hat.begin(), fit.beta_hat.end());
  return report;
}

ModelReport failed_model_report(const std::string& model,
                                const std::string& error) {
  ModelReport report;
  report.model = model;
  report.error = error;
  return report;
}

ordered_json to_json(const RunReport& report) {
  ordered_json root;
  root["schema_version"] = kReportSchemaVersion;
  root["tool"] = "ordicc";
  root["version"] = version();
  root["command"] = report.command;
  root["input"] = report.input;
  root["level"] = num_or_null(report.level);
  if (report.seed) {
    root["seed"] = *report.seed;
  }
  root["models"] = ordered_json::array();
  for (const auto& model : report.models) {
    ordered_json block;
    block["model"] = model.model;
    block["fitted"] = model.fitted;
    if (!model.fitted) {
      block["error"] = model.error;
      root["models"].push_back(std::move(block));
      continue;
    }
    block["converged"] = model.converged;
    block["degenerate"] = model.degenerate;
    block["icc"] = num_or_null(model.icc);
    block["ci"] = interval_or_null(model.ci);
    block["ci_method"] = model.ci_method;
    block["loglik"] = num_or_null(model.loglik);
    block["n_iterations"] = model.n_iterations;
    if (!model.gradient_method.empty()) {
      block["gradient_method"] = model.gradient_method;
    }
    block["n_obs"] = model.n_obs;
    block["n_clusters"] = model.n_clusters;
    block["n_ears"] = model.n_ears ? ordered_json(*model.n_ears)
                                   : ordered_json(nullptr);
    block["sigma_b_sq"] = num_or_null(model.sigma_b_sq);
    block["sigma_c_sq"] = model.sigma_c_sq ? num_or_null(*model.sigma_c_sq)
                                           : ordered_json(nullptr);
    block["sigma_eps_sq"] = model.sigma_eps_sq
                                ? num_or_null(*model.sigma_eps_sq)
                                : ordered_json(nullptr);
    if (!model.thresholds.empty()) {
      ordered_json xi = ordered_json::array();
      for (const double value : model.thresholds) {
        xi.push_back(num_or_null(value));
      }
      block["thresholds"] = std::move(xi);
    }
    ordered_json coef = ordered_json::object();
    for (std::size_t j = 0; j < model.coef_values.size(); ++j) {
      const std::string name = j < model.coef_names.size()
                                   ? model.coef_names[j]
                                   : "coef" + std::to_string(j + 1);
      coef[name] = num_or_null(model.coef_values[j]);
    }
    block["coefficients"] = std::move(coef);
    root["models"].push_back(std::move(block));
  }
  return root;
}

std::string render_text(const RunReport& report) {
  std::ostringstream out;
  out << "ordicc " << version() << "  (" << report.command << ")\n";
  out << "input: " << report.input << "\n";
  if (report.seed) out << "seed: " << *report.seed << "\n";
  out << "\n";
  out << std::left << std::setw(15) << "model" << std::setw(8) << "icc"
      << std::setw(18)
      << (std::to_string(static_cast<int>(report.level * 100 + 0.5)) +
          "% ci")
      << std::setw(19) << "ci_method" << "status\n";
  for (const auto& model : report.models) {
    out << std::left << std::setw(15) << model.model;
    if (!model.fitted) {
      out << "failed: " << model.error << "\n";
      continue;
    }
    std::ostringstream icc;
    icc << std::fixed << std::setprecision(3) << model.icc;
    out << std::setw(8) << icc.str() << std::setw(18) << format_ci(model.ci)
        << std::setw(19) << model.ci_method;
    if (model.degenerate) {
      out << "degenerate";
    } else if (model.converged) {
      out << "converged";
    } else {
      out << "not converged";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace ordicc
