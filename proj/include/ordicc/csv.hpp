#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ordicc/dataset.hpp"

namespace ordicc {

// One data file in the standard schema
//   subject_id,ear_id,measurement,category,x1,...,xp
// ear_id may be empty (single-level data); measurement may be empty (NaN).
struct CsvDataset {
  std::vector<std::string> subject_ids;
  std::vector<std::string> ear_ids;
  std::vector<double> measurements;
  std::vector<std::int64_t> categories;
  Eigen::MatrixXd covariates;
  std::vector<std::string> covariate_names;

  int n_rows() const { return static_cast<int>(subject_ids.size()); }
};

// Strict parser; malformed content throws InvalidInputError with
// "<name>:<line>: <what>" diagnostics.
CsvDataset read_dataset_csv(std::istream& in, const std::string& name);
CsvDataset read_dataset_csv(const std::string& path);

void write_dataset_csv(std::ostream& out, const CsvDataset& data);

// Row selection and covariate subsetting ahead of canonicalize().
//  - ear_filter keeps only rows with that ear id (single-level analysis of
//    one ear); nesting must be single.
//  - nested data requires a non-empty ear_id on every row; ear ids are
//    scoped per subject (subject + '\x1f' + ear) so reused labels such as
//    "left"/"right" stay distinct across subjects.
//  - empty covariate_subset selects every covariate column in file order.
RawObservations to_raw_observations(
    const CsvDataset& csv, Nesting nesting,
    const std::optional<std::string>& ear_filter = std::nullopt,
    const std::vector<std::string>& covariate_subset = {});

}  // namespace ordicc
