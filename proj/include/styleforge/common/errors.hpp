#pragma once

#include <stdexcept>
#include <string>

namespace styleforge {

// Exit-code classes used by the CLI. Every library error maps onto one.
enum class ErrorClass { usage = 2, data = 3, training = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorClass::usage, w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorClass::data, w) {}
};

// Malformed or non-closing track.
struct GeometryError : DataError {
  using DataError::DataError;
};

// Vehicle left the 5x lane half width corridor.
struct OffTrackError : DataError {
  OffTrackError(const std::string& w, double distance) : DataError(w), distance_(distance) {}
  double distance() const noexcept { return distance_; }

 private:
  double distance_;
};

struct ShapeError : DataError {
  using DataError::DataError;
};

struct GraphError : DataError {
  using DataError::DataError;
};

struct ConfigError : DataError {
  using DataError::DataError;
};

struct TrainingError : Error {
  TrainingError(const std::string& w, int epoch = -1) : Error(ErrorClass::training, w), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace styleforge
