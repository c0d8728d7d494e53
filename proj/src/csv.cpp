#include "ordicc/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "ordicc/errors.hpp"

namespace ordicc {
namespace {

[[noreturn]] void fail(const std::string& name, int line,
                       const std::string& what) {
  std::ostringstream msg;
  msg << name << ":" << line << ": " << what;
  throw InvalidInputError(msg.str());
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_real(const std::string& field, const std::string& name, int line,
                  const std::string& column) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail(name, line, "column '" + column + "': not a decimal number: '" +
                         field + "'");
  }
  return value;
}

std::int64_t parse_category(const std::string& field, const std::string& name,
                            int line) {
  std::int64_t value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || value < 1) {
    fail(name, line,
         "column 'category': not a positive integer: '" + field + "'");
  }
  return value;
}

void write_real(std::ostream& out, double value) {
  char buf[64];
  const auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof buf, value);
  out.write(buf, ptr - buf);
  (void)ec;
}

}  // namespace

CsvDataset read_dataset_csv(std::istream& in, const std::string& name) {
  static const std::vector<std::string> kFixed = {"subject_id", "ear_id",
                                                  "measurement", "category"};
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) fail(name, 1, "empty file, header required");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < kFixed.size()) {
    fail(name, line_no,
         "header must start with subject_id,ear_id,measurement,category");
  }
  for (std::size_t j = 0; j < kFixed.size(); ++j) {
    if (header[j] != kFixed[j]) {
      fail(name, line_no, "header column " + std::to_string(j + 1) +
                              " must be '" + kFixed[j] + "', found '" +
                              header[j] + "'");
    }
  }
  CsvDataset out;
  out.covariate_names.assign(header.begin() + kFixed.size(), header.end());
  std::unordered_set<std::string> seen;
  for (const auto& cov : out.covariate_names) {
    if (cov.empty()) fail(name, line_no, "empty covariate column name");
    if (!seen.insert(cov).second) {
      fail(name, line_no, "duplicate covariate column '" + cov + "'");
    }
  }
  const std::size_t n_fields = header.size();
  const int p = static_cast<int>(out.covariate_names.size());

  std::vector<double> cov_values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != n_fields) {
      fail(name, line_no, "expected " + std::to_string(n_fields) +
                              " fields, found " +
                              std::to_string(fields.size()));
    }
    if (fields[0].empty()) fail(name, line_no, "empty subject_id");
    out.subject_ids.push_back(fields[0]);
    out.ear_ids.push_back(fields[1]);
    out.measurements.push_back(
        fields[2].empty() ? std::numeric_limits<double>::quiet_NaN()
                          : parse_real(fields[2], name, line_no,
                                       "measurement"));
    out.categories.push_back(parse_category(fields[3], name, line_no));
    for (int j = 0; j < p; ++j) {
      cov_values.push_back(parse_real(fields[kFixed.size() + j], name,
                                      line_no, out.covariate_names[j]));
    }
  }
  const int n = out.n_rows();
  if (n == 0) fail(name, line_no, "no data rows");
  out.covariates.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      out.covariates(i, j) = cov_values[static_cast<std::size_t>(i) * p + j];
    }
  }
  return out;
}

CsvDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError(path + ": cannot open for reading");
  return read_dataset_csv(in, path);
}

void write_dataset_csv(std::ostream& out, const CsvDataset& data) {
  out << "subject_id,ear_id,measurement,category";
  for (const auto& cov : data.covariate_names) out << ',' << cov;
  out << '\n';
  const int p = static_cast<int>(data.covariate_names.size());
  for (int i = 0; i < data.n_rows(); ++i) {
    out << data.subject_ids[i] << ',' << data.ear_ids[i] << ',';
    if (!std::isnan(data.measurements[i])) {
      write_real(out, data.measurements[i]);
    }
    out << ',' << data.categories[i];
    for (int j = 0; j < p; ++j) {
      out << ',';
      write_real(out, data.covariates(i, j));
    }
    out << '\n';
  }
}

RawObservations to_raw_observations(
    const CsvDataset& csv, Nesting nesting,
    const std::optional<std::string>& ear_filter,
    const std::vector<std::string>& covariate_subset) {
  if (ear_filter && nesting == Nesting::nested) {
    throw InvalidInputError(
        "an ear filter selects a single-level analysis; it cannot be "
        "combined with nested structure");
  }

  std::vector<int> columns;
  if (covariate_subset.empty()) {
    columns.resize(csv.covariate_names.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
      columns[j] = static_cast<int>(j);
    }
  } else {
    for (const auto& want : covariate_subset) {
      const auto it = std::find(csv.covariate_names.begin(),
                                csv.covariate_names.end(), want);
      if (it == csv.covariate_names.end()) {
        throw InvalidInputError("covariate column '" + want +
                                "' not present in the data");
      }
      columns.push_back(
          static_cast<int>(it - csv.covariate_names.begin()));
    }
  }

  std::vector<int> rows;
  rows.reserve(csv.n_rows());
  for (int i = 0; i < csv.n_rows(); ++i) {
    if (ear_filter && csv.ear_ids[i] != *ear_filter) continue;
    rows.push_back(i);
  }
  if (rows.empty()) {
    throw InvalidInputError(ear_filter
                                ? "no rows with ear_id '" + *ear_filter + "'"
                                : std::string("no rows selected"));
  }

  RawObservations raw;
  raw.covariates.resize(static_cast<int>(rows.size()),
                        static_cast<int>(columns.size()));
  for (const int col : columns) {
    raw.covariate_names.push_back(csv.covariate_names[col]);
  }
  int r = 0;
  for (const int i : rows) {
    raw.subject_ids.push_back(csv.subject_ids[i]);
    if (nesting == Nesting::nested) {
      if (csv.ear_ids[i].empty()) {
        throw InvalidInputError(
            "nested analysis requires a non-empty ear_id on every row "
            "(subject '" + csv.subject_ids[i] + "')");
      }
      raw.ear_ids.push_back(csv.subject_ids[i] + '\x1f' + csv.ear_ids[i]);
    }
    raw.cells.push_back(csv.categories[i]);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      raw.covariates(r, static_cast<int>(j)) =
          csv.covariates(i, columns[j]);
    }
    ++r;
  }
  return raw;
}

}  // namespace ordicc
