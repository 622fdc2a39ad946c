#pragma once

#include <Eigen/Dense>
#include <memory>
#include <mutex>
#include <string>

#include "sdlab/calculus.hpp"
#include "sdlab/geometry.hpp"
#include "sdlab/laplacian.hpp"

namespace sdlab {

/// Smooth C-infinity step: 1 for t <= 0, 0 for t >= 1, phi(1-t) / (phi(t) + phi(1-t))
/// in between with phi(t) = exp(-1/t).
double smooth_transition(double t);

struct DampingProfile {
  Eigen::VectorXd samples;
  double eps0 = 0.0;
  double amplitude = 0.0;
  std::string transition = "exp-ratio";
};

/// a(x) = c * rho((dist(x, dB) - eps0) / eps0) on the interior nodes.
DampingProfile damping_profile(const SceneConfig& scene, const GridMask& mask);

/// Cutoff psi = 0 where dist(x, dB) <= eps0/3 and 1 where dist >= eps0/2,
/// built from the same transition.
Eigen::VectorXd interior_cutoff(const SceneConfig& scene, const GridMask& mask);

/// Constant a(x) = value everywhere; diagnostic operators.
DampingProfile constant_profile(const GridMask& mask, double value);

/// Non-Hermitian eigendecomposition A = V diag(values) V^{-1}.
struct Eigendecomposition {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;
  Eigen::MatrixXcd inverse;
  /// 2-norm condition number of V.
  double condition = 1.0;
};

/// A = Lambda + iB with B = M_a Lambda^{1/2} M_a in the truncated eigenbasis.
class DampedOperator {
 public:
  DampedOperator(std::shared_ptr<const SpectralBasis> basis, Eigen::MatrixXd multiplier);

  const std::shared_ptr<const SpectralBasis>& basis() const { return basis_; }
  int size() const { return static_cast<int>(a_.rows()); }
  const Eigen::VectorXd& lambda() const { return basis_->gamma_sq(); }
  const Eigen::MatrixXd& multiplier() const { return m_; }
  const Eigen::MatrixXd& damping() const { return b_; }
  const Eigen::MatrixXcd& matrix() const { return a_; }

  /// Computed once on first use; safe to call from concurrent readers.
  const Eigendecomposition& eigen() const;

 private:
  std::shared_ptr<const SpectralBasis> basis_;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd b_;
  Eigen::MatrixXcd a_;
  mutable std::once_flag eigen_once_;
  mutable Eigendecomposition eigen_;
};

std::shared_ptr<const DampedOperator> assemble_operator(const DampingProfile& profile,
                                                        std::shared_ptr<const SpectralBasis> basis);

struct SpectrumReport {
  /// Sorted by real part, ties by imaginary part.
  Eigen::VectorXcd eigenvalues;
  double sigma0_star = 0.0;
  int nonpositive_count = 0;
  int negative_count = 0;
  double eigenvector_condition = 1.0;
  int k = 0;
  double h = 0.0;
};

SpectrumReport spectrum(const DampedOperator& op);

std::string spectrum_csv(const SpectrumReport& report);
std::string spectrum_json(const SpectrumReport& report, std::uint64_t scene_hash);

}  // namespace sdlab
