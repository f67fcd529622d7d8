#pragma once

#include <stdexcept>
#include <string>

namespace exarnn {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad or insufficient input data: too few samples, unordered timestamps,
// unparseable CSV rows, misaligned environment samples.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class OrderingError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, double learning_rate)
      : std::runtime_error("loss became non-finite at epoch " + std::to_string(epoch) +
                           " (learning rate " + std::to_string(learning_rate) + ")"),
        epoch_(epoch),
        learning_rate_(learning_rate) {}

  std::size_t epoch() const { return epoch_; }
  double learning_rate() const { return learning_rate_; }

 private:
  std::size_t epoch_;
  double learning_rate_;
};

}  // namespace exarnn
