#include "sdlab/error.hpp"

namespace sdlab {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidScene: return "invalid-scene";
    case ErrorKind::UnsupportedConfiguration: return "unsupported-configuration";
    case ErrorKind::NoTrappedRay: return "no-trapped-ray";
    case ErrorKind::UnderResolved: return "under-resolved";
    case ErrorKind::DegenerateDomain: return "degenerate-domain";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::PoleProximity: return "pole-proximity";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Comparison: return "comparison";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

NumericError::NumericError(const std::string& what, double residual)
    : Error(ErrorKind::Numeric, what + " (residual " + std::to_string(residual) + ")"),
      residual_(residual) {}

PoleProximityError::PoleProximityError(const std::string& what, std::complex<double> nearest)
    : Error(ErrorKind::PoleProximity,
            what + " (nearest eigenvalue " + std::to_string(nearest.real()) + (nearest.imag() < 0 ? "" : "+") +
                std::to_string(nearest.imag()) + "i)"),
      nearest_(nearest) {}

}  // namespace sdlab
