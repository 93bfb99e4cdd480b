#pragma once

#include <stdexcept>
#include <string>

namespace facecloak {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// I/O and image formats.
class FileNotFoundError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class ImageFormatError : public Error {
 public:
  using Error::Error;
};

/// Two images (or an image and an alpha field) disagree on dimensions or layout.
class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// Cascade models.
class ModelError : public Error {
 public:
  using Error::Error;
};
class MalformedModelError : public ModelError {
 public:
  using ModelError::ModelError;
};
/// The model uses the pre-2.4 `opencv-haar-classifier` tree layout.
class LegacyModelError : public ModelError {
 public:
  using ModelError::ModelError;
};
class DanglingFeatureIndexError : public ModelError {
 public:
  using ModelError::ModelError;
};
class UnsupportedModelError : public ModelError {
 public:
  using ModelError::ModelError;
};

// Search and analysis.
class NoFaceError : public Error {
 public:
  using Error::Error;
};
class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

// Remote detectors.
class RemoteError : public Error {
 public:
  using Error::Error;
};
class RemoteTimeoutError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class RemoteNetworkError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class RemoteAuthError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class RemoteStatusError : public RemoteError {
 public:
  RemoteStatusError(int status, const std::string& what) : RemoteError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};
class RemoteParseError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};

}  // namespace facecloak
