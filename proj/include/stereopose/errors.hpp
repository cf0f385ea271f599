#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stereopose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define STEREOPOSE_DEFINE_ERROR(Name)          \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  }

STEREOPOSE_DEFINE_ERROR(DegenerateRotation);
STEREOPOSE_DEFINE_ERROR(InvalidRotation);
STEREOPOSE_DEFINE_ERROR(ZeroDisparity);
STEREOPOSE_DEFINE_ERROR(EmptyModel);
STEREOPOSE_DEFINE_ERROR(FrustumExhausted);
STEREOPOSE_DEFINE_ERROR(IoFailure);
STEREOPOSE_DEFINE_ERROR(ClassOutOfRange);
STEREOPOSE_DEFINE_ERROR(ShapeMismatch);
STEREOPOSE_DEFINE_ERROR(NonFiniteLoss);
STEREOPOSE_DEFINE_ERROR(TooFewKeypoints);
STEREOPOSE_DEFINE_ERROR(SingularInnovation);
STEREOPOSE_DEFINE_ERROR(NonMonotonicTime);
STEREOPOSE_DEFINE_ERROR(ClassMismatch);
STEREOPOSE_DEFINE_ERROR(EmptyInput);
STEREOPOSE_DEFINE_ERROR(LengthMismatch);
STEREOPOSE_DEFINE_ERROR(InvalidArgument);

#undef STEREOPOSE_DEFINE_ERROR

/// A projected point lies at or behind the camera's near plane.
class BehindCamera : public Error {
 public:
  explicit BehindCamera(std::size_t index)
      : Error("point " + std::to_string(index) + " is behind the camera"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace stereopose
