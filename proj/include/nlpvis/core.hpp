#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace nlpvis {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

/// A caller broke an ordering or sizing contract (e.g. a non-consecutive
/// event sequence number).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number of the offending record.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

class DegeneratePlane : public Error {
 public:
  using Error::Error;
};

class UnsupportedProjection : public Error {
 public:
  using Error::Error;
};

class EmptyTrajectory : public Error {
 public:
  using Error::Error;
};

/// Position of an element of the optimization trajectory S, linked back to
/// the eval event that produced it.
struct StepIndex {
  std::size_t ordinal = 0;
  std::size_t event_seq = 0;

  friend bool operator==(const StepIndex&, const StepIndex&) = default;
};

/// One (optimization step, value) sample of a chart series.
struct SeriesPoint {
  std::size_t step = 0;
  double value = 0.0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace nlpvis
