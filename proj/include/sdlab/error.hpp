#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace sdlab {

enum class ErrorKind {
  InvalidScene,
  UnsupportedConfiguration,
  NoTrappedRay,
  UnderResolved,
  DegenerateDomain,
  Numeric,
  Domain,
  Shape,
  PoleProximity,
  Resolution,
  Usage,
  Comparison,
};

const char* to_string(ErrorKind kind);

/// Base class of every error raised by the library. The kind drives the CLI
/// exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SDLAB_DEFINE_ERROR(Name, Kind)                         \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  }

SDLAB_DEFINE_ERROR(InvalidSceneError, ErrorKind::InvalidScene);
SDLAB_DEFINE_ERROR(UnsupportedConfigurationError, ErrorKind::UnsupportedConfiguration);
SDLAB_DEFINE_ERROR(NoTrappedRayError, ErrorKind::NoTrappedRay);
SDLAB_DEFINE_ERROR(UnderResolvedError, ErrorKind::UnderResolved);
SDLAB_DEFINE_ERROR(DegenerateDomainError, ErrorKind::DegenerateDomain);
SDLAB_DEFINE_ERROR(DomainError, ErrorKind::Domain);
SDLAB_DEFINE_ERROR(ShapeError, ErrorKind::Shape);
SDLAB_DEFINE_ERROR(ResolutionError, ErrorKind::Resolution);
SDLAB_DEFINE_ERROR(UsageError, ErrorKind::Usage);
SDLAB_DEFINE_ERROR(ComparisonError, ErrorKind::Comparison);

#undef SDLAB_DEFINE_ERROR

/// Eigensolver or factorization failure; carries the offending residual.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double residual);
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Raised when a shifted system is (numerically) singular.
class PoleProximityError : public Error {
 public:
  PoleProximityError(const std::string& what, std::complex<double> nearest);
  std::complex<double> nearest_eigenvalue() const noexcept { return nearest_; }

 private:
  std::complex<double> nearest_;
};

}  // namespace sdlab
