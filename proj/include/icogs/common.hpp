#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace icogs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Base class for every error raised by the core library. The C API maps
/// subclasses onto status codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. depth <= 0).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Caller broke a documented precondition (shape mismatch, n < 2, ...).
class ContractError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration document, override, or missing dataset.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-finite loss encountered during training.
class NumericError : public Error {
public:
  using Error::Error;
};

inline constexpr double kZNear = 1e-4;

} // namespace icogs
