#pragma once

#include <stdexcept>
#include <string>

namespace pgee {

/// Malformed or inconsistent input data (bad CSV cell, duplicate rows, constant columns).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// The numerical procedure could not produce an answer (singular systems,
/// too many failed bootstrap replicates, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pgee
