#include "ordicc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace ordicc {

void validate_params(const LatentParams& params) {
  if (!params.beta_star.allFinite()) {
    throw InvalidInputError("latent params: beta_star must be finite");
  }
  if (!(params.sigma_b_star_sq > 0.0) ||
      !std::isfinite(params.sigma_b_star_sq)) {
    throw InvalidInputError(
        "latent params: sigma_b_star_sq must be positive and finite");
  }
  if (params.sigma_c_star_sq &&
      (!(*params.sigma_c_star_sq > 0.0) ||
       !std::isfinite(*params.sigma_c_star_sq))) {
    throw InvalidInputError(
        "latent params: sigma_c_star_sq must be positive and finite");
  }
  if (!(params.sigma_eps_star_sq > 0.0) ||
      !std::isfinite(params.sigma_eps_star_sq)) {
    throw InvalidInputError(
        "latent params: sigma_eps_star_sq must be positive and finite");
  }
}

std::int64_t discretize(double y_star, const CutpointLattice& lattice) {
  if (!std::isfinite(y_star)) {
    throw InvalidInputError("discretize: y_star must be finite");
  }
  if (!(lattice.spacing > 0.0) || !std::isfinite(lattice.spacing) ||
      !std::isfinite(lattice.anchor)) {
    throw InvalidInputError(
        "discretize: lattice needs finite anchor and positive spacing");
  }
  const double cell = std::ceil((y_star - lattice.anchor) / lattice.spacing);
  if (std::fabs(cell) > 9.0e15) {
    throw InvalidInputError("discretize: cell index overflows");
  }
  return static_cast<std::int64_t>(cell);
}

bool ThresholdSet::valid() const {
  if (!xi.allFinite()) return false;
  for (Eigen::Index k = 1; k < xi.size(); ++k) {
    if (!(xi[k - 1] < xi[k])) return false;
  }
  return true;
}

OrdinalDataset canonicalize(const RawObservations& raw, Nesting nesting) {
  const std::size_t n = raw.cells.size();
  if (raw.subject_ids.size() != n ||
      static_cast<std::size_t>(raw.covariates.rows()) != n) {
    throw InvalidInputError("canonicalize: column lengths disagree");
  }
  if (!raw.ear_ids.empty() && raw.ear_ids.size() != n) {
    throw InvalidInputError("canonicalize: ear_ids length disagrees");
  }
  if (n == 0) {
    throw InvalidInputError("canonicalize: no observations");
  }
  if (!raw.covariates.allFinite()) {
    throw InvalidInputError("canonicalize: covariates must be finite");
  }
  if (!raw.covariate_names.empty() &&
      raw.covariate_names.size() !=
          static_cast<std::size_t>(raw.covariates.cols())) {
    throw InvalidInputError("canonicalize: covariate name count disagrees");
  }
  if (nesting == Nesting::nested) {
    if (raw.ear_ids.size() != n) {
      throw InvalidInputError("canonicalize: nested data needs ear ids");
    }
    for (const auto& ear : raw.ear_ids) {
      if (ear.empty()) {
        throw InvalidInputError(
            "canonicalize: nested data has an empty ear id");
      }
    }
  }
  for (const auto& subject : raw.subject_ids) {
    if (subject.empty()) {
      throw InvalidInputError("canonicalize: empty subject id");
    }
  }

  std::set<std::int64_t> distinct(raw.cells.begin(), raw.cells.end());
  if (distinct.size() < 2) {
    throw DegenerateOutcomeError(
        "canonicalize: outcome has fewer than two observed categories");
  }

  std::map<std::int64_t, int> code;
  std::vector<std::int64_t> cells_sorted(distinct.begin(), distinct.end());
  for (std::size_t k = 0; k < cells_sorted.size(); ++k) {
    code[cells_sorted[k]] = static_cast<int>(k) + 1;
  }

  OrdinalDataset data;
  data.subject_ids = raw.subject_ids;
  data.ear_ids = nesting == Nesting::nested ? raw.ear_ids
                                            : std::vector<std::string>{};
  data.categories.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.categories[i] = code.at(raw.cells[i]);
  }
  data.covariates = raw.covariates;
  data.covariate_names = raw.covariate_names;
  data.original_cells = std::move(cells_sorted);
  data.n_categories = static_cast<int>(distinct.size());
  data.nesting = nesting;

  if (nesting == Nesting::nested) {
    // Enforce the ear -> subject function property up front.
    std::map<std::string, std::string> owner;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = owner.emplace(data.ear_ids[i], data.subject_ids[i]);
      if (!inserted && it->second != data.subject_ids[i]) {
        throw InvalidInputError("canonicalize: ear id '" + data.ear_ids[i] +
                                "' appears under more than one subject");
      }
    }
  }
  return data;
}

ClusterLayout cluster_layout(const OrdinalDataset& data) {
  const int n = data.n_obs();
  const bool nested = data.nesting == Nesting::nested;

  std::map<std::string, int> cluster_of;
  std::vector<std::vector<int>> members;  // obs indices per cluster
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) {
    auto [it, inserted] = cluster_of.emplace(
        data.subject_ids[i], static_cast<int>(members.size()));
    if (inserted) {
      members.emplace_back();
      ids.push_back(data.subject_ids[i]);
    }
    members[it->second].push_back(i);
  }

  ClusterLayout layout;
  layout.order.reserve(n);
  layout.cluster_ids = std::move(ids);
  layout.clusters.reserve(members.size());
  if (nested) layout.ears.resize(members.size());

  for (std::size_t c = 0; c < members.size(); ++c) {
    ClusterLayout::Span span;
    span.begin = static_cast<int>(layout.order.size());
    if (!nested) {
      for (int i : members[c]) layout.order.push_back(i);
    } else {
      // group the cluster's observations by ear, ears in first-seen order
      std::map<std::string, int> ear_of;
      std::vector<std::vector<int>> ear_members;
      for (int i : members[c]) {
        auto [it, inserted] = ear_of.emplace(
            data.ear_ids[i], static_cast<int>(ear_members.size()));
        if (inserted) ear_members.emplace_back();
        ear_members[it->second].push_back(i);
      }
      for (const auto& em : ear_members) {
        ClusterLayout::Span ear_span;
        ear_span.begin = static_cast<int>(layout.order.size());
        for (int i : em) layout.order.push_back(i);
        ear_span.end = static_cast<int>(layout.order.size());
        layout.ears[c].push_back(ear_span);
      }
    }
    span.end = static_cast<int>(layout.order.size());
    layout.clusters.push_back(span);
  }
  return layout;
}

std::vector<Violation> validate(const OrdinalDataset& data) {
  std::vector<Violation> out;
  const std::size_t n = data.categories.size();

  auto add = [&out](std::string where, std::string message) {
    out.push_back({std::move(where), std::move(message)});
  };

  if (n == 0) add("rows", "dataset is empty");
  if (data.subject_ids.size() != n) {
    add("subject_ids", "length differs from number of observations");
  }
  if (static_cast<std::size_t>(data.covariates.rows()) != n) {
    add("covariates", "row count differs from number of observations");
  }
  if (!data.covariates.allFinite()) {
    add("covariates", "contains non-finite values");
  }
  if (data.n_categories < 2) {
    add("categories", "fewer than two categories");
  }

  std::vector<int> seen(std::max(data.n_categories, 0), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = data.categories[i];
    if (k < 1 || k > data.n_categories) {
      std::ostringstream msg;
      msg << "row " << i << ": code " << k << " outside 1.."
          << data.n_categories;
      add("categories", msg.str());
    } else {
      ++seen[k - 1];
    }
  }
  for (int k = 0; k < data.n_categories; ++k) {
    if (seen.size() > static_cast<std::size_t>(k) && seen[k] == 0) {
      std::ostringstream msg;
      msg << "code " << (k + 1) << " never observed";
      add("categories", msg.str());
    }
  }

  if (data.nesting == Nesting::nested) {
    if (data.ear_ids.size() != n) {
      add("ear_ids", "nested data must carry an ear id per observation");
    } else {
      std::map<std::string, std::string> owner;
      for (std::size_t i = 0; i < n; ++i) {
        if (data.ear_ids[i].empty()) {
          std::ostringstream msg;
          msg << "row " << i << ": empty ear id";
          add("ear_ids", msg.str());
          continue;
        }
        auto [it, inserted] =
            owner.emplace(data.ear_ids[i], data.subject_ids[i]);
        if (!inserted && it->second != data.subject_ids[i]) {
          add("ear_ids", "ear id '" + data.ear_ids[i] +
                             "' appears under more than one subject");
        }
      }
    }
  } else if (!data.ear_ids.empty()) {
    add("ear_ids", "single-level data should not carry ear ids");
  }

  return out;
}

}  // namespace ordicc
