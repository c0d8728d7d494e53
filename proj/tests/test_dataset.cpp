#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ordicc/csv.hpp"
#include "ordicc/dataset.hpp"

using namespace ordicc;

namespace {

RawObservations tiny_raw(bool nested) {
  RawObservations raw;
  raw.subject_ids = {"a", "a", "b", "b", "b"};
  // ear ids must already be unique across subjects at this layer
  if (nested) raw.ear_ids = {"aL", "aR", "bL", "bL", "bR"};
  raw.cells = {4, -2, 0, 4, 0};
  raw.covariates.resize(5, 1);
  raw.covariates << 0.1, -0.2, 0.3, 0.0, 1.5;
  raw.covariate_names = {"x1"};
  return raw;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("discretize maps latent values onto right-closed cells") {
  CutpointLattice lattice;  // anchor 0, spacing 2
  CHECK(discretize(0.0, lattice) == 0);
  CHECK(discretize(0.0001, lattice) == 1);
  CHECK(discretize(2.0, lattice) == 1);
  CHECK(discretize(2.0001, lattice) == 2);
  CHECK(discretize(-3.9, lattice) == -1);
  CHECK(discretize(-4.0, lattice) == -2);

  CutpointLattice shifted{.anchor = 1.0, .spacing = 0.5};
  CHECK(discretize(1.0, shifted) == 0);
  CHECK(discretize(1.25, shifted) == 1);
  CHECK(discretize(0.75, shifted) == 0);
  CHECK(discretize(0.5, shifted) == -1);
  CHECK(discretize(0.3, shifted) == -1);

  // monotone in the latent value
  long long prev = discretize(-10.0, lattice);
  for (double y = -10.0; y <= 10.0; y += 0.37) {
    const long long cell = discretize(y, lattice);
    CHECK(cell >= prev);
    prev = cell;
  }
}

TEST_CASE("discretize rejects a bad lattice") {
  CHECK_THROWS_AS((void)discretize(1.0, {.anchor = 0.0, .spacing = 0.0}),
                  InvalidInputError);
  CHECK_THROWS_AS((void)discretize(1.0, {.anchor = 0.0, .spacing = -2.0}),
                  InvalidInputError);
}

TEST_CASE("canonicalize recodes cells to consecutive categories") {
  const RawObservations raw = tiny_raw(false);
  const OrdinalDataset data = canonicalize(raw, Nesting::single);
  REQUIRE(data.n_obs() == 5);
  CHECK(data.n_categories == 3);
  // cells {-2, 0, 4} become codes {1, 2, 3} preserving order
  CHECK(data.categories == std::vector<int>{3, 1, 2, 3, 2});
  CHECK(data.original_cells == std::vector<std::int64_t>{-2, 0, 4});
  CHECK(data.nesting == Nesting::single);
  CHECK(data.ear_ids.empty());
  CHECK(validate(data).empty());
}

TEST_CASE("canonicalize keeps nested ear structure") {
  const RawObservations raw = tiny_raw(true);
  const OrdinalDataset data = canonicalize(raw, Nesting::nested);
  CHECK(data.nesting == Nesting::nested);
  REQUIRE(data.ear_ids.size() == 5);
  CHECK(validate(data).empty());

  const ClusterLayout layout = cluster_layout(data);
  REQUIRE(layout.clusters.size() == 2);
  CHECK(layout.cluster_ids == std::vector<std::string>{"a", "b"});
  REQUIRE(layout.ears.size() == 2);
  CHECK(layout.ears[0].size() == 2);  // a: L, R
  CHECK(layout.ears[1].size() == 2);  // b: L, R
  // layout.order groups cluster-contiguously and ear-contiguously
  const auto& b_ears = layout.ears[1];
  CHECK(b_ears[0].end - b_ears[0].begin == 2);  // b/L twice
  CHECK(b_ears[1].end - b_ears[1].begin == 1);
}

TEST_CASE("canonicalize throws when the outcome is degenerate") {
  RawObservations raw = tiny_raw(false);
  raw.cells = {4, 4, 4, 4, 4};
  CHECK_THROWS_AS((void)canonicalize(raw, Nesting::single),
                  DegenerateOutcomeError);
}

TEST_CASE("canonicalize rejects structural problems") {
  RawObservations raw = tiny_raw(false);
  raw.subject_ids.pop_back();
  CHECK_THROWS_AS((void)canonicalize(raw, Nesting::single), InvalidInputError);

  RawObservations nan_cov = tiny_raw(false);
  nan_cov.covariates(2, 0) = std::nan("");
  CHECK_THROWS_AS((void)canonicalize(nan_cov, Nesting::single),
                  InvalidInputError);

  RawObservations no_ears = tiny_raw(false);
  CHECK_THROWS_AS((void)canonicalize(no_ears, Nesting::nested),
                  InvalidInputError);

  RawObservations shared_ear = tiny_raw(true);
  shared_ear.ear_ids[2] = "aL";  // already owned by subject a
  CHECK_THROWS_AS((void)canonicalize(shared_ear, Nesting::nested),
                  InvalidInputError);
}

TEST_CASE("validate reports unseen category codes") {
  RawObservations raw = tiny_raw(false);
  OrdinalDataset data = canonicalize(raw, Nesting::single);
  data.categories[0] = 5;  // out of range
  CHECK(!validate(data).empty());

  OrdinalDataset gap = canonicalize(raw, Nesting::single);
  gap.n_categories = 4;  // code 4 never observed
  CHECK(!validate(gap).empty());
}

TEST_CASE("thresholds validity") {
  ThresholdSet t;
  t.xi.resize(3);
  t.xi << -1.0, 0.2, 1.7;
  CHECK(t.valid());
  CHECK(t.n_categories() == 4);
  t.xi << -1.0, 1.7, 0.2;
  CHECK(!t.valid());
  t.xi << -1.0, -1.0, 0.2;
  CHECK(!t.valid());
}

TEST_CASE("csv round trip preserves every field") {
  CsvDataset out;
  out.subject_ids = {"s1", "s1", "s2"};
  out.ear_ids = {"e1", "e2", "e1"};
  out.measurements = {0.123456789012345, -3.5, std::nan("")};
  out.categories = {2, 1, 3};
  out.covariates.resize(3, 2);
  out.covariates << 1.0, -0.25, 0.0, 17.0, 2.5e-7, 3.0;
  out.covariate_names = {"x1", "x2"};

  std::stringstream buf;
  write_dataset_csv(buf, out);
  const CsvDataset in = read_dataset_csv(buf, "buffer");

  REQUIRE(in.n_rows() == 3);
  CHECK(in.subject_ids == out.subject_ids);
  CHECK(in.ear_ids == out.ear_ids);
  CHECK(in.categories == out.categories);
  CHECK(in.covariate_names == out.covariate_names);
  CHECK(in.measurements[0] == out.measurements[0]);  // exact round trip
  CHECK(in.measurements[1] == out.measurements[1]);
  CHECK(std::isnan(in.measurements[2]));
  CHECK(in.covariates.cwiseEqual(out.covariates).all());
}

TEST_CASE("csv parser pinpoints the offending line") {
  std::stringstream bad("subject_id,ear_id,measurement,category,x1\n"
                        "s1,,0.5,2,0.1\n"
                        "s2,,0.5,oops,0.2\n");
  CHECK_THROWS_WITH_AS((void)read_dataset_csv(bad, "data.csv"),
                       doctest::Contains("data.csv:3"), InvalidInputError);

  std::stringstream short_row("subject_id,ear_id,measurement,category,x1\n"
                              "s1,,0.5,2\n");
  CHECK_THROWS_WITH_AS((void)read_dataset_csv(short_row, "f"),
                       doctest::Contains("f:2"), InvalidInputError);

  std::stringstream bad_header("subject,ear_id,measurement,category\n");
  CHECK_THROWS_AS((void)read_dataset_csv(bad_header, "f"), InvalidInputError);

  std::stringstream empty("");
  CHECK_THROWS_AS((void)read_dataset_csv(empty, "f"), InvalidInputError);

  std::stringstream headers_only("subject_id,ear_id,measurement,category\n");
  CHECK_THROWS_AS((void)read_dataset_csv(headers_only, "f"),
                  InvalidInputError);

  std::stringstream zero_cat("subject_id,ear_id,measurement,category\n"
                             "s1,,0.5,0\n");
  CHECK_THROWS_AS((void)read_dataset_csv(zero_cat, "f"), InvalidInputError);
}

TEST_CASE("csv accepts empty measurement and crlf endings") {
  std::stringstream buf("subject_id,ear_id,measurement,category\r\n"
                        "s1,,,2\r\n"
                        "s1,,,1\r\n");
  const CsvDataset data = read_dataset_csv(buf, "f");
  REQUIRE(data.n_rows() == 2);
  CHECK(std::isnan(data.measurements[0]));
  CHECK(data.covariates.cols() == 0);
}

TEST_CASE("to_raw_observations scopes ear ids per subject") {
  std::stringstream buf("subject_id,ear_id,measurement,category\n"
                        "s1,left,,1\n"
                        "s1,right,,2\n"
                        "s2,left,,2\n"
                        "s2,right,,1\n");
  const CsvDataset csv = read_dataset_csv(buf, "f");
  const RawObservations raw = to_raw_observations(csv, Nesting::nested);
  const OrdinalDataset data = canonicalize(raw, Nesting::nested);
  const ClusterLayout layout = cluster_layout(data);
  REQUIRE(layout.clusters.size() == 2);
  // "left" under s1 and "left" under s2 are distinct ears, so each subject
  // carries two ears rather than sharing them
  CHECK(layout.ears[0].size() == 2);
  CHECK(layout.ears[1].size() == 2);
}

TEST_CASE("to_raw_observations ear filter and covariate subset") {
  std::stringstream buf("subject_id,ear_id,measurement,category,x1,x2\n"
                        "s1,left,,1,0.1,1.0\n"
                        "s1,right,,2,0.2,2.0\n"
                        "s2,left,,2,0.3,3.0\n");
  const CsvDataset csv = read_dataset_csv(buf, "f");

  const RawObservations left =
      to_raw_observations(csv, Nesting::single, std::string("left"));
  CHECK(left.subject_ids.size() == 2);

  const RawObservations sub =
      to_raw_observations(csv, Nesting::single, std::nullopt, {"x2"});
  REQUIRE(sub.covariates.cols() == 1);
  CHECK(sub.covariate_names == std::vector<std::string>{"x2"});
  CHECK(sub.covariates(2, 0) == doctest::Approx(3.0));

  CHECK_THROWS_AS((void)to_raw_observations(csv, Nesting::nested,
                                            std::string("left")),
                  InvalidInputError);
  CHECK_THROWS_AS(
      (void)to_raw_observations(csv, Nesting::single, std::nullopt, {"zz"}),
      InvalidInputError);
  CHECK_THROWS_AS(
      (void)to_raw_observations(csv, Nesting::single, std::string("gone")),
      InvalidInputError);
}

TEST_CASE("nested rows all need an ear id") {
  std::stringstream buf("subject_id,ear_id,measurement,category\n"
                        "s1,left,,1\n"
                        "s1,,,2\n");
  const CsvDataset csv = read_dataset_csv(buf, "f");
  CHECK_THROWS_WITH_AS((void)to_raw_observations(csv, Nesting::nested),
                       doctest::Contains("ear_id"), InvalidInputError);
}

}  // TEST_SUITE
