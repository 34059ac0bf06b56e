#pragma once

#include <stdexcept>
#include <string>

namespace mft {

// Bad configuration: unsupported bit-width, unknown op name, invalid config
// key, non-positive cost.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: non-finite values, empty tensors, shape/length mismatch,
// unreadable files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A fixed-point shift or accumulation that would not fit its word.
class OverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An API used out of order, e.g. backward() without a cached forward().
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf showed up during training.
class TrainingFault : public std::runtime_error {
 public:
  TrainingFault(const std::string& what, long step = -1, int layer = -1)
      : std::runtime_error(what), step_(step), layer_(layer) {}

  long step() const { return step_; }
  int layer() const { return layer_; }

 private:
  long step_;
  int layer_;
};

}  // namespace mft
