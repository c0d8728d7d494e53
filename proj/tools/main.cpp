#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ordicc/csv.hpp"
#include "ordicc/errors.hpp"
#include "ordicc/estimation.hpp"
#include "ordicc/icc.hpp"
#include "ordicc/lmm.hpp"
#include "ordicc/report.hpp"
#include "ordicc/simulation.hpp"
#include "ordicc/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitIo = 3;

// I/O problems get their own exit code, separate from input/schema errors.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> design;
  std::optional<std::string> error_family;
  std::optional<int> n_subjects;
  std::optional<int> n_ears;
  std::optional<int> n_obs;
  std::optional<int> n_replicates;
  std::optional<double> beta_star;
  std::optional<double> sigma_b_sq;
  std::optional<double> sigma_c_sq;
  std::optional<double> error_variance;
  std::optional<double> anchor;
  std::optional<double> spacing;
  std::optional<double> level;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "JSON file with scenario settings (flags override)");
  cmd->add_option("--design", flags.design, "single or nested");
  cmd->add_option("--error-family", flags.error_family,
                  "normal or logistic");
  cmd->add_option("--n-subjects", flags.n_subjects, "clusters / subjects");
  cmd->add_option("--n-ears", flags.n_ears, "ears per subject (nested)");
  cmd->add_option("--n-obs", flags.n_obs, "observations per cluster or ear");
  cmd->add_option("--beta-star", flags.beta_star, "latent slope");
  cmd->add_option("--sigma-b-sq", flags.sigma_b_sq,
                  "latent between-cluster variance");
  cmd->add_option("--sigma-c-sq", flags.sigma_c_sq,
                  "latent within-subject (ear) variance, nested only");
  cmd->add_option("--error-variance", flags.error_variance,
                  "latent error variance");
  cmd->add_option("--anchor", flags.anchor, "discretization anchor");
  cmd->add_option("--spacing", flags.spacing, "discretization spacing");
  cmd->add_option("--replicates", flags.n_replicates,
                  "number of Monte Carlo replicates");
  cmd->add_option("--level", flags.level, "confidence level");
  cmd->add_option("--seed", flags.seed, "master seed");
}

[[noreturn]] void config_error(const std::string& what) {
  throw ordicc::InvalidInputError("simulation config: " + what);
}

template <typename T>
T config_number(const nlohmann::json& value, const char* field) {
  if constexpr (std::is_floating_point_v<T>) {
    if (!value.is_number()) {
      config_error(std::string(field) + " must be a number");
    }
  } else {
    if (!value.is_number_integer()) {
      config_error(std::string(field) + " must be an integer");
    }
  }
  return value.get<T>();
}

void apply_config_file(const std::string& path, ConfigFlags& flags) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    config_error(path + ": " + err.what());
  }
  if (!root.is_object()) config_error(path + ": top level must be an object");

  // flags already set on the command line win over file values
  for (const auto& [key, value] : root.items()) {
    if (key == "design") {
      if (!value.is_string()) config_error("design must be a string");
      if (!flags.design) flags.design = value.get<std::string>();
    } else if (key == "error_family") {
      if (!value.is_string()) config_error("error_family must be a string");
      if (!flags.error_family) flags.error_family = value.get<std::string>();
    } else if (key == "n_subjects") {
      if (!flags.n_subjects)
        flags.n_subjects = config_number<int>(value, "n_subjects");
    } else if (key == "n_ears") {
      if (!flags.n_ears) flags.n_ears = config_number<int>(value, "n_ears");
    } else if (key == "n_obs") {
      if (!flags.n_obs) flags.n_obs = config_number<int>(value, "n_obs");
    } else if (key == "n_replicates") {
      if (!flags.n_replicates)
        flags.n_replicates = config_number<int>(value, "n_replicates");
    } else if (key == "beta_star") {
      if (!flags.beta_star)
        flags.beta_star = config_number<double>(value, "beta_star");
    } else if (key == "sigma_b_star_sq") {
      if (!flags.sigma_b_sq)
        flags.sigma_b_sq = config_number<double>(value, "sigma_b_star_sq");
    } else if (key == "sigma_c_star_sq") {
      if (!flags.sigma_c_sq)
        flags.sigma_c_sq = config_number<double>(value, "sigma_c_star_sq");
    } else if (key == "error_variance") {
      if (!flags.error_variance)
        flags.error_variance = config_number<double>(value, "error_variance");
    } else if (key == "ci_level") {
      if (!flags.level) flags.level = config_number<double>(value, "ci_level");
    } else if (key == "seed") {
      if (!flags.seed)
        flags.seed = config_number<std::uint64_t>(value, "seed");
    } else if (key == "lattice") {
      if (!value.is_object()) config_error("lattice must be an object");
      for (const auto& [lkey, lvalue] : value.items()) {
        if (lkey == "anchor") {
          if (!flags.anchor)
            flags.anchor = config_number<double>(lvalue, "lattice.anchor");
        } else if (lkey == "spacing") {
          if (!flags.spacing)
            flags.spacing = config_number<double>(lvalue, "lattice.spacing");
        } else {
          config_error("unknown lattice field '" + lkey + "'");
        }
      }
    } else {
      config_error("unknown field '" + key + "'");
    }
  }
}

ordicc::SimConfig build_sim_config(ConfigFlags flags) {
  if (flags.config_path) apply_config_file(*flags.config_path, flags);

  ordicc::Nesting design = ordicc::Nesting::single;
  if (flags.design) {
    if (*flags.design == "nested") {
      design = ordicc::Nesting::nested;
    } else if (*flags.design != "single") {
      config_error("design must be 'single' or 'nested'");
    }
  }
  ordicc::ErrorFamily family = ordicc::ErrorFamily::normal;
  if (flags.error_family) {
    if (*flags.error_family == "logistic") {
      family = ordicc::ErrorFamily::logistic;
    } else if (*flags.error_family != "normal") {
      config_error("error_family must be 'normal' or 'logistic'");
    }
  }

  ordicc::SimConfig config =
      design == ordicc::Nesting::nested
          ? ordicc::nested_config(family, flags.seed.value_or(0))
          : ordicc::single_level_config(family, flags.seed.value_or(0));
  if (flags.n_subjects) config.n_subjects = *flags.n_subjects;
  if (flags.n_ears) config.n_ears = *flags.n_ears;
  if (flags.n_obs) config.n_obs = *flags.n_obs;
  if (flags.beta_star) config.beta_star = *flags.beta_star;
  if (flags.sigma_b_sq) config.sigma_b_star_sq = *flags.sigma_b_sq;
  if (flags.sigma_c_sq) config.sigma_c_star_sq = *flags.sigma_c_sq;
  if (flags.error_variance) config.error_variance = *flags.error_variance;
  if (flags.anchor) config.lattice.anchor = *flags.anchor;
  if (flags.spacing) config.lattice.spacing = *flags.spacing;
  if (flags.n_replicates) config.n_replicates = *flags.n_replicates;
  if (flags.level) config.ci_level = *flags.level;
  return config;
}

int resolve_threads(std::optional<int> flag) {
  if (flag) {
    if (*flag < 1) config_error("--threads must be at least 1");
    return *flag;
  }
  if (const char* env = std::getenv("ORDICC_THREADS")) {
    const int value = std::atoi(env);
    if (value >= 1) return value;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << content;
  if (!out) throw IoError(path + ": write failed");
}

void emit(const std::optional<std::string>& out_path,
          const std::string& content) {
  if (out_path) {
    write_text_file(*out_path, content);
  } else {
    std::cout << content;
  }
}

struct FitArgs {
  std::string csv_path;
  std::string link = "all";
  bool naive = false;
  bool nested = false;
  std::optional<std::string> ear;
  std::vector<std::string> covariates;
  double level = 0.95;
  int quad_nodes = 15;
  std::string format = "json";
  std::optional<std::string> out_path;
};

int cmd_fit(const FitArgs& args) {
  using namespace ordicc;
  if (args.link != "probit" && args.link != "logistic" && args.link != "all") {
    throw InvalidInputError("--link must be probit, logistic, or all");
  }
  if (args.format != "json" && args.format != "text") {
    throw InvalidInputError("--format must be json or text");
  }
  if (!(args.level > 0.0 && args.level < 1.0)) {
    throw InvalidInputError("--level must lie in (0, 1)");
  }
  if (args.quad_nodes < 1) {
    throw InvalidInputError("--quad-nodes must be at least 1");
  }

  std::ifstream in(args.csv_path);
  if (!in) throw IoError(args.csv_path + ": cannot open for reading");
  const CsvDataset csv = read_dataset_csv(in, args.csv_path);
  const Nesting nesting = args.nested ? Nesting::nested : Nesting::single;
  const RawObservations raw =
      to_raw_observations(csv, nesting, args.ear, args.covariates);
  const OrdinalDataset data = canonicalize(raw, nesting);

  RunReport report;
  report.command = "fit";
  report.input = args.csv_path;
  report.level = args.level;

  std::vector<Link> links;
  if (args.link == "probit" || args.link == "all") {
    links.push_back(Link::probit);
  }
  if (args.link == "logistic" || args.link == "all") {
    links.push_back(Link::logistic);
  }

  for (const Link link : links) {
    const std::string name =
        link == Link::probit ? "clmm_probit" : "clmm_logistic";
    try {
      FitOptions options;
      options.n_quadrature = args.quad_nodes;
      options.compute_vcov = nesting == Nesting::nested;
      const ClmmFit fit = fit_clmm(data, link, options);
      IccEstimate est;
      if (nesting == Nesting::nested) {
        est = icc_with_delta_ci(fit, args.level);
      } else {
        const ProfileCi profile =
            profile_ci_sigma_b(data, link, fit, args.level, options);
        est = icc_with_profile_ci(fit, profile, args.level);
      }
      report.models.push_back(model_report(fit, est, data.covariate_names));
    } catch (const std::exception& err) {
      report.models.push_back(failed_model_report(name, err.what()));
    }
  }
  if (args.naive) {
    try {
      const LmmFit fit = fit_lmm(data, {});
      const IccEstimate est = icc_with_delta_ci(fit, args.level);
      report.models.push_back(model_report(fit, est, data.covariate_names));
    } catch (const std::exception& err) {
      report.models.push_back(failed_model_report("naive_lmm", err.what()));
    }
  }

  if (args.format == "json") {
    emit(args.out_path, to_json(report).dump(2) + "\n");
  } else {
    emit(args.out_path, render_text(report));
  }
  return kExitOk;
}

int cmd_simulate(const ConfigFlags& flags, std::optional<int> threads_flag,
                 const std::optional<std::string>& out_path,
                 const std::optional<std::string>& replicates_path) {
  using namespace ordicc;
  const SimConfig config = build_sim_config(flags);
  const int n_threads = resolve_threads(threads_flag);

  const std::vector<ReplicateOutcome> outcomes =
      run_replicates(config, n_threads);
  const SimSummary summary = summarize(outcomes, true_icc(config));

  std::ostringstream csv;
  write_summary_csv(csv, config, summary);
  emit(out_path, csv.str());
  if (replicates_path) {
    std::ostringstream reps;
    write_replicates_csv(reps, outcomes);
    write_text_file(*replicates_path, reps.str());
  }
  return kExitOk;
}

int cmd_generate(const ConfigFlags& flags, std::uint64_t replicate,
                 const std::optional<std::string>& out_path) {
  using namespace ordicc;
  const SimConfig config = build_sim_config(flags);
  const GeneratedReplicate gen = generate_replicate(config, replicate);
  std::ostringstream csv;
  write_dataset_csv(csv, gen.csv);
  emit(out_path, csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adjusted intracluster correlation for ordinal outcomes"};
  app.set_version_flag("--version", ordicc::version());
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand(
      "fit", "fit the ordinal and naive models to a CSV dataset");
  fit->add_option("csv", fit_args.csv_path, "input data file")->required();
  fit->add_option("--link", fit_args.link,
                  "probit, logistic, or all (default all)");
  fit->add_flag("--naive", fit_args.naive,
                "also fit the naive linear mixed model");
  CLI::Option* nested_flag = fit->add_flag(
      "--nested", fit_args.nested, "subject + ear random effects");
  fit->add_option("--ear", fit_args.ear,
                  "restrict to one ear (single-level analysis)")
      ->excludes(nested_flag);
  fit->add_option("--covariates", fit_args.covariates,
                  "covariate columns to include (default: all)")
      ->delimiter(',');
  fit->add_option("--level", fit_args.level, "confidence level");
  fit->add_option("--quad-nodes", fit_args.quad_nodes,
                  "quadrature nodes per integral");
  fit->add_option("--format", fit_args.format, "json or text");
  fit->add_option("--out", fit_args.out_path, "write the report here");

  ConfigFlags sim_flags;
  std::optional<int> sim_threads;
  std::optional<std::string> sim_out, sim_replicates_out;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "run a Monte Carlo scenario and summarize it");
  add_config_flags(simulate, sim_flags);
  simulate->add_option("--threads", sim_threads, "worker threads");
  simulate->add_option("--out", sim_out, "summary CSV path (default stdout)");
  simulate->add_option("--replicates-out", sim_replicates_out,
                       "optional per-replicate CSV path");

  ConfigFlags gen_flags;
  std::uint64_t gen_replicate = 0;
  std::optional<std::string> gen_out;
  CLI::App* generate = app.add_subcommand(
      "generate", "write one simulated dataset as CSV");
  add_config_flags(generate, gen_flags);
  generate->add_option("--replicate", gen_replicate, "replicate index");
  generate->add_option("--out", gen_out, "output CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit) return cmd_fit(fit_args);
    if (*simulate) {
      return cmd_simulate(sim_flags, sim_threads, sim_out,
                          sim_replicates_out);
    }
    return cmd_generate(gen_flags, gen_replicate, gen_out);
  } catch (const IoError& err) {
    std::cerr << "ordicc: " << err.what() << "\n";
    return kExitIo;
  } catch (const ordicc::InvalidInputError& err) {
    std::cerr << "ordicc: " << err.what() << "\n";
    return kExitInput;
  } catch (const ordicc::DegenerateOutcomeError& err) {
    std::cerr << "ordicc: " << err.what() << "\n";
    return kExitInput;
  } catch (const std::exception& err) {
    std::cerr << "ordicc: " << err.what() << "\n";
    return kExitInput;
  }
}
