#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace oppraim {

// Data / configuration errors surface as exceptions; the CLI maps them to
// exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidCoordinate : DataError {
  using DataError::DataError;
};
struct MalformedTrace : DataError {
  using DataError::DataError;
};
struct NonMonotonicTimestamps : DataError {
  using DataError::DataError;
};
struct EmptyMasterStream : DataError {
  using DataError::DataError;
};
struct ConfigInvalid : DataError {
  using DataError::DataError;
};
struct ScheduleOutOfRange : DataError {
  using DataError::DataError;
};
struct InsufficientSamples : DataError {
  using DataError::DataError;
};
struct InsufficientHistory : DataError {
  using DataError::DataError;
};
struct NoEstimates : DataError {
  using DataError::DataError;
};
struct NoGroundTruth : DataError {
  using DataError::DataError;
};
struct LengthMismatch : DataError {
  using DataError::DataError;
};
struct EmptyGrid : DataError {
  using DataError::DataError;
};
struct MissingInput : DataError {
  using DataError::DataError;
};

// Per-subset solver failures are values, not exceptions: an epoch never
// aborts because one subset was degenerate.
enum class SolveError {
  kInsufficientAnchors,
  kSingularGeometry,
  kNoConvergence,
  kInsufficientSatellites,
  kDegenerateFit,
  kNoGeoipData,
};

const char* to_string(SolveError e);

template <typename T>
class Solved {
 public:
  Solved(T value) : value_(std::move(value)), error_(SolveError::kNoConvergence) {}
  Solved(SolveError error) : error_(error) {}

  bool ok() const { return value_.has_value(); }
  explicit operator bool() const { return ok(); }

  const T& value() const& { return *value_; }
  T& value() & { return *value_; }
  T&& value() && { return *std::move(value_); }
  SolveError error() const { return error_; }

 private:
  std::optional<T> value_;
  SolveError error_;
};

}  // namespace oppraim
