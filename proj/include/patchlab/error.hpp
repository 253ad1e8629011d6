#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched image/mask/distribution dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Image extent not divisible by the requested grid.
class DivisibilityError : public Error {
 public:
  using Error::Error;
};

/// A precondition on argument values was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Lost connection to an external oracle. Retryable; carries the index of
/// the batch that was in flight.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::size_t batch_index)
      : Error(what), batch_index_(batch_index) {}
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class VersionError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Occluder placement could not reach the requested occlusion level.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, double best_fraction)
      : Error(what), best_fraction_(best_fraction) {}
  double best_fraction() const noexcept { return best_fraction_; }

 private:
  double best_fraction_;
};

}  // namespace patchlab
