#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cavstab {

/// Bad or inconsistent input data. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric breakdown of a simulation. The CLI maps these to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public DataError {
 public:
  EmptyInput() : DataError("input contains no data rows") {}
};

class MissingColumn : public DataError {
 public:
  explicit MissingColumn(std::string name)
      : DataError("missing required column '" + name + "'"), column(std::move(name)) {}
  std::string column;
};

class UnparsableField : public DataError {
 public:
  UnparsableField(std::size_t row_, std::string column_, const std::string& text)
      : DataError("row " + std::to_string(row_) + ", column '" + column_ +
                  "': cannot parse '" + text + "'"),
        row(row_),
        column(std::move(column_)) {}
  std::size_t row;
  std::string column;
};

class DuplicateFrame : public DataError {
 public:
  DuplicateFrame(std::int64_t vehicle, std::int64_t frame)
      : DataError("vehicle " + std::to_string(vehicle) + " has duplicate frame " +
                  std::to_string(frame)),
        vehicle_id(vehicle),
        frame_id(frame) {}
  std::int64_t vehicle_id;
  std::int64_t frame_id;
};

class EmptySeries : public DataError {
 public:
  EmptySeries() : DataError("series is empty") {}
};

class SeriesTooShort : public DataError {
 public:
  explicit SeriesTooShort(std::size_t n)
      : DataError("series needs at least 2 samples, got " + std::to_string(n)) {}
};

class LengthMismatch : public DataError {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : DataError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class NonpositiveHeadway : public DataError {
 public:
  explicit NonpositiveHeadway(std::size_t index)
      : DataError("data headway at index " + std::to_string(index) + " is not positive") {}
};

class LeaderTooShort : public DataError {
 public:
  LeaderTooShort() : DataError("leader trajectory needs at least 2 samples") {}
};

class InfeasibleInitialState : public DataError {
 public:
  using DataError::DataError;
};

class NonpositiveEquilibriumHeadway : public DataError {
 public:
  explicit NonpositiveEquilibriumHeadway(double h)
      : DataError("equilibrium headway " + std::to_string(h) + " m is not positive") {}
};

class EmptyPlatoon : public DataError {
 public:
  EmptyPlatoon() : DataError("platoon has no vehicles") {}
};

class NoFeasibleGains : public DataError {
 public:
  NoFeasibleGains() : DataError("no string-stable controller gains on the search grid") {}
};

}  // namespace cavstab
