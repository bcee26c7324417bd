#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace armassist {

// Bad arguments, malformed config or out-of-domain parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too few usable sessions or windows to compute the requested quantity.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Packet stream that cannot be ordered (duplicate or non-monotone sequence).
class CorruptStreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by spectral metrics when a window has no power where it is needed.
class SpectrumError : public std::domain_error {
 public:
  SpectrumError(const std::string& what, std::optional<std::size_t> window = std::nullopt)
      : std::domain_error(what), window_(window) {}
  std::optional<std::size_t> window() const { return window_; }

 private:
  std::optional<std::size_t> window_;
};

// Zero reference-band power: the limb was not moving.
class NoMotionError : public SpectrumError {
 public:
  using SpectrumError::SpectrumError;
};

// Zero in-band power for a frequency statistic.
class DegenerateSpectrumError : public SpectrumError {
 public:
  using SpectrumError::SpectrumError;
};

}  // namespace armassist
