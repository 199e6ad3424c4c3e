// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace nilm {

/// Shapes or extents of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on a scalar argument failed (negative stddev, empty input, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model or experiment configuration is inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Convolution/pooling arithmetic does not produce an integral extent.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value that must be finite was NaN or infinite.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Input file does not follow the documented format. Carries the 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, int batch, const std::string& detail)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + detail),
        epoch_(epoch),
        batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace nilm
