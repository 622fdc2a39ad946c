#include "sdlab/calculus.hpp"

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <cmath>

#include "sdlab/error.hpp"

namespace sdlab {

ModeVector::ModeVector(std::shared_ptr<const SpectralBasis> b, Eigen::VectorXcd c)
    : basis(std::move(b)), coeffs(std::move(c)) {
  if (!basis) throw ShapeError("mode vector needs a basis");
  if (coeffs.size() != basis->size()) {
    throw ShapeError("mode vector length " + std::to_string(coeffs.size()) + " does not match K = " +
                     std::to_string(basis->size()));
  }
}

ModeVector ModeVector::zero(std::shared_ptr<const SpectralBasis> basis) {
  const int k = basis ? basis->size() : 0;
  return {std::move(basis), Eigen::VectorXcd::Zero(k)};
}

ModeVector ModeVector::unit(std::shared_ptr<const SpectralBasis> basis, int j) {
  ModeVector u = zero(std::move(basis));
  if (j < 0 || j >= u.size()) throw DomainError("mode index out of range");
  u.coeffs[j] = 1.0;
  return u;
}

GalerkinMatrix::GalerkinMatrix(Eigen::MatrixXcd m, bool sym) : matrix(std::move(m)), symmetric(sym) {
  if (matrix.rows() != matrix.cols()) throw ShapeError("Galerkin matrices are square");
  if (symmetric) {
    const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
    const double skew = (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
    if (skew > 1e-12 * scale) throw ShapeError("matrix flagged symmetric is not Hermitian");
  }
}

cplx inner(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) {
  if (u.size() != v.size()) throw ShapeError("inner product of vectors of different length");
  // Eigen's dot is conjugate-linear in its first argument.
  return v.dot(u);
}

double hs_norm(const ModeVector& u, double s) {
  return (u.basis->gamma_pow(s).cwiseProduct(u.coeffs.cwiseAbs())).norm();
}

ModeVector frac_power_apply(const ModeVector& u, double s) {
  return {u.basis, u.basis->gamma_pow(s).cast<cplx>().cwiseProduct(u.coeffs)};
}

double interpolation_gap(const ModeVector& g, double s, double t) {
  if (s < 0.0 || s > t) throw DomainError("interpolation needs 0 <= s <= t");
  if (g.coeffs.norm() == 0.0) throw DomainError("interpolation gap is undefined for g = 0");
  if (t == 0.0) return 0.0;
  const double theta = s / t;
  return std::pow(hs_norm(g, t), theta) * std::pow(hs_norm(g, 0.0), 1.0 - theta) - hs_norm(g, s);
}

GalerkinMatrix mult_matrix(const Eigen::VectorXd& f, const SpectralBasis& basis) {
  Eigen::MatrixXd m = basis.weighted_gram(f);
  return {m.cast<cplx>(), true};
}

Eigen::VectorXd singular_values(const Eigen::MatrixXcd& m) {
  const lapack_int rows = static_cast<lapack_int>(m.rows());
  const lapack_int cols = static_cast<lapack_int>(m.cols());
  Eigen::VectorXd s(std::min(rows, cols));
  if (s.size() == 0) return s;
  Eigen::MatrixXcd work = m;
  const lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', rows, cols, work.data(), rows, s.data(),
                                         nullptr, 1, nullptr, 1);
  if (info != 0) throw NumericError("zgesdd failed with info " + std::to_string(info), 0.0);
  return s;
}

double weighted_opnorm(const Eigen::MatrixXcd& m, const SpectralBasis& basis, double s_in, double s_out) {
  if (m.rows() != basis.size() || m.cols() != basis.size()) throw ShapeError("matrix size does not match K");
  const Eigen::VectorXd d_out = basis.gamma_pow(s_out);
  const Eigen::VectorXd d_in_inv = basis.gamma_pow(-s_in);
  const Eigen::MatrixXcd w = d_out.asDiagonal() * m * d_in_inv.asDiagonal();
  return singular_values(w)[0];
}

double weighted_opnorm(const GalerkinMatrix& m, const SpectralBasis& basis, double s_in, double s_out) {
  return weighted_opnorm(m.matrix, basis, s_in, s_out);
}

double commutator_growth(const Eigen::VectorXd& f, const SpectralBasis& basis, int n, double s) {
  if (n < 1 || 2 * n > 4) throw DomainError("commutator order must satisfy 1 <= n <= 2");
  const Eigen::MatrixXd m = basis.weighted_gram(f);
  const Eigen::VectorXd lam = basis.gamma_pow(2.0 * n);
  const Eigen::MatrixXd c = m * lam.asDiagonal() - lam.asDiagonal() * m;
  return weighted_opnorm(c.cast<cplx>().eval(), basis, s, s - 2.0 * n + 1.0);
}

}  // namespace sdlab
