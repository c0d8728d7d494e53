#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ordicc {

// Malformed input: bad lattice, inconsistent column lengths, non-finite
// values, unknown identifiers, ...
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Outcome collapsed to fewer than two observed categories, so no ordinal
// model can be identified.
class DegenerateOutcomeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Marginal likelihood evaluated to a non-finite value; carries the id of the
// cluster whose contribution failed.
class LikelihoodEvalError : public std::runtime_error {
 public:
  LikelihoodEvalError(const std::string& what, std::string cluster)
      : std::runtime_error(what), cluster_id(std::move(cluster)) {}

  std::string cluster_id;
};

// An intracluster correlation was requested from a fit that cannot provide
// one (wrong nesting, missing variance components, ...).
class UndefinedIccError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ordicc
