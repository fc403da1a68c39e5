#pragma once

#include <stdexcept>
#include <string>

namespace attnviz {

// Tensor shape or arity violation. Messages name the offending shapes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: bad tap name, backward on a non-scalar, alpha out of range, ...
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (network spec, run config).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data problems: missing files, malformed records.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed data file contents (wrong length, bad label byte, ...).
struct FormatError : DataError {
  using DataError::DataError;
};

// Checkpoint file problems: bad magic, version, or parameter mismatch.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem write failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted because the loss went non-finite.
class NanLossError : public std::runtime_error {
 public:
  NanLossError(int epoch, int batch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace attnviz
