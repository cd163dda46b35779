#pragma once

#include <stdexcept>
#include <string>

namespace scenefuse {

/// Base of every error raised by the library. Each subclass maps to one
/// named failure mode so callers can catch exactly what they handle.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SCENEFUSE_ERROR(Name)          \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

SCENEFUSE_ERROR(AngleNearPi);
SCENEFUSE_ERROR(DegenerateGeometry);
SCENEFUSE_ERROR(InvalidInfoMatrix);
SCENEFUSE_ERROR(DuplicateNode);
SCENEFUSE_ERROR(UnknownNode);
SCENEFUSE_ERROR(StaleTimestamp);
SCENEFUSE_ERROR(IneligibleAnchor);
SCENEFUSE_ERROR(SingularNormalEquations);
SCENEFUSE_ERROR(NoPath);
SCENEFUSE_ERROR(TooFewSamples);
SCENEFUSE_ERROR(NoOverlap);
SCENEFUSE_ERROR(UnknownTarget);
SCENEFUSE_ERROR(ProtocolError);
SCENEFUSE_ERROR(BindFailure);
SCENEFUSE_ERROR(ConnectionLost);
SCENEFUSE_ERROR(ConfigError);

#undef SCENEFUSE_ERROR

}  // namespace scenefuse
