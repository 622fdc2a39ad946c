#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>

#include "sdlab/laplacian.hpp"

namespace sdlab {

using cplx = std::complex<double>;

/// Coefficients u = sum_j a_j e_j of a function in the truncated basis.
struct ModeVector {
  std::shared_ptr<const SpectralBasis> basis;
  Eigen::VectorXcd coeffs;

  ModeVector(std::shared_ptr<const SpectralBasis> basis, Eigen::VectorXcd coeffs);
  static ModeVector zero(std::shared_ptr<const SpectralBasis> basis);
  static ModeVector unit(std::shared_ptr<const SpectralBasis> basis, int j);

  int size() const { return static_cast<int>(coeffs.size()); }
};

/// K x K matrix in the eigenbasis. When flagged symmetric it is Hermitian to
/// 1e-12 (checked on construction).
struct GalerkinMatrix {
  Eigen::MatrixXcd matrix;
  bool symmetric = false;

  GalerkinMatrix() = default;
  GalerkinMatrix(Eigen::MatrixXcd m, bool symmetric);
  int size() const { return static_cast<int>(matrix.rows()); }
};

/// <u, v> = sum_j u_j conj(v_j); conjugate-linear in the second slot.
cplx inner(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v);

double hs_norm(const ModeVector& u, double s);
ModeVector frac_power_apply(const ModeVector& u, double s);

/// |g|_t^{s/t} |g|_0^{1-s/t} - |g|_s, nonnegative by Hoelder.
double interpolation_gap(const ModeVector& g, double s, double t);

/// M[j, k] = h^2 sum_x f(x) e_j(x) e_k(x).
GalerkinMatrix mult_matrix(const Eigen::VectorXd& f, const SpectralBasis& basis);

/// Singular values in descending order (LAPACK divide and conquer, no vectors).
Eigen::VectorXd singular_values(const Eigen::MatrixXcd& m);

/// ||D_out M D_in^{-1}||_2 with D_sigma = diag(gamma_j^sigma).
double weighted_opnorm(const Eigen::MatrixXcd& m, const SpectralBasis& basis, double s_in, double s_out);
double weighted_opnorm(const GalerkinMatrix& m, const SpectralBasis& basis, double s_in, double s_out);

/// weighted_opnorm(M_f Lambda^n - Lambda^n M_f, s, s - 2n + 1).
double commutator_growth(const Eigen::VectorXd& f, const SpectralBasis& basis, int n, double s);

}  // namespace sdlab
