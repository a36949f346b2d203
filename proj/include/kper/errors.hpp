#pragma once

#include <stdexcept>
#include <string>

namespace kper {

struct KperError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CapacityExceeded : KperError {
  using KperError::KperError;
};
struct EpochMismatch : KperError {
  using KperError::KperError;
};
struct LengthError : KperError {
  using KperError::KperError;
};
struct PositionOutOfRange : KperError {
  using KperError::KperError;
};
struct SingularSystem : KperError {
  using KperError::KperError;
};
struct EmptyStream : KperError {
  using KperError::KperError;
};
struct UndefinedWeight : KperError {
  using KperError::KperError;
};
struct RetryExhausted : KperError {
  using KperError::KperError;
};
struct TooManyWildcards : KperError {
  using KperError::KperError;
};
struct InvalidInput : KperError {
  using KperError::KperError;
};

}  // namespace kper
