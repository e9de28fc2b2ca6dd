#pragma once

#include <stdexcept>
#include <string>

namespace ulcerflow {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ULCERFLOW_DEFINE_ERROR(Name)      \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

ULCERFLOW_DEFINE_ERROR(InvalidBox);
ULCERFLOW_DEFINE_ERROR(InvalidTransform);
ULCERFLOW_DEFINE_ERROR(InvalidArgument);
ULCERFLOW_DEFINE_ERROR(ShapeError);
ULCERFLOW_DEFINE_ERROR(InputShapeError);
ULCERFLOW_DEFINE_ERROR(BackendError);
ULCERFLOW_DEFINE_ERROR(EmptyInput);
ULCERFLOW_DEFINE_ERROR(InvalidCalibration);
ULCERFLOW_DEFINE_ERROR(MissingGroundTruth);
ULCERFLOW_DEFINE_ERROR(SiteMismatch);
ULCERFLOW_DEFINE_ERROR(DecodeError);
ULCERFLOW_DEFINE_ERROR(WriteError);
ULCERFLOW_DEFINE_ERROR(ConfigError);

#undef ULCERFLOW_DEFINE_ERROR

}  // namespace ulcerflow
