#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace fidex {

// Error categories. The CLI maps each one onto a stable exit code.
enum class ErrorKind {
  Parse,            // malformed document
  Validation,       // well-formed document violating an invariant
  DimensionMismatch,
  UnknownMarker,
  BaseUnobserved,   // link markers seen without the base marker
  Unobservable,     // no visible link to fit against
  BranchAmbiguity,  // SE(3) log at a rotation angle of ~pi
  NumericalFailure,
  NotConverged,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::UnknownMarker: return "unknown-marker";
    case ErrorKind::BaseUnobserved: return "base-unobserved";
    case ErrorKind::Unobservable: return "unobservable";
    case ErrorKind::BranchAmbiguity: return "branch-ambiguity";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::NotConverged: return "not-converged";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

// Raised by the solver when the cost stops being finite. Carries the last
// iterate whose cost was finite.
class NumericalFailure : public Error {
public:
  NumericalFailure(const std::string& what, Eigen::VectorXd last_good)
      : Error(ErrorKind::NumericalFailure, what), last_good_(std::move(last_good)) {}

  const Eigen::VectorXd& last_good() const noexcept { return last_good_; }

private:
  Eigen::VectorXd last_good_;
};

}  // namespace fidex
