#include "sdlab/damped_operator.hpp"

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "sdlab/error.hpp"

namespace sdlab {

namespace {
double phi(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
}  // namespace

double smooth_transition(double t) {
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  const double a = phi(1.0 - t);
  return a / (phi(t) + a);
}

DampingProfile damping_profile(const SceneConfig& scene, const GridMask& mask) {
  validate_scene(scene);
  DampingProfile p;
  p.eps0 = scene.eps0;
  p.amplitude = scene.amplitude;
  const int n = mask.interior_count();
  p.samples.resize(n);
  for (int idx = 0; idx < n; ++idx) {
    const double d = mask.boundary_distance(mask.interior_nodes()[idx]);
    p.samples[idx] = scene.amplitude * smooth_transition((d - scene.eps0) / scene.eps0);
  }
  return p;
}

Eigen::VectorXd interior_cutoff(const SceneConfig& scene, const GridMask& mask) {
  validate_scene(scene);
  const int n = mask.interior_count();
  const double width = scene.eps0 / 6.0;
  Eigen::VectorXd psi(n);
  for (int idx = 0; idx < n; ++idx) {
    const double d = mask.boundary_distance(mask.interior_nodes()[idx]);
    psi[idx] = smooth_transition((0.5 * scene.eps0 - d) / width);
  }
  return psi;
}

DampingProfile constant_profile(const GridMask& mask, double value) {
  DampingProfile p;
  p.amplitude = value;
  p.transition = "constant";
  p.samples = Eigen::VectorXd::Constant(mask.interior_count(), value);
  return p;
}

DampedOperator::DampedOperator(std::shared_ptr<const SpectralBasis> basis, Eigen::MatrixXd multiplier)
    : basis_(std::move(basis)), m_(std::move(multiplier)) {
  if (!basis_) throw ShapeError("damped operator needs a basis");
  const int k = basis_->size();
  if (m_.rows() != k || m_.cols() != k) throw ShapeError("multiplier must be K x K");
  m_ = 0.5 * (m_ + m_.transpose()).eval();
  const Eigen::VectorXd gamma = basis_->gamma_pow(1.0);
  b_ = m_ * gamma.asDiagonal() * m_;
  b_ = 0.5 * (b_ + b_.transpose()).eval();
  a_ = b_.cast<cplx>() * cplx(0.0, 1.0);
  a_.diagonal() += basis_->gamma_sq().cast<cplx>();
}

const Eigendecomposition& DampedOperator::eigen() const {
  std::call_once(eigen_once_, [this] {
    const lapack_int n = size();
    Eigen::MatrixXcd work = a_;
    Eigen::VectorXcd w(n);
    Eigen::MatrixXcd vr(n, n);
    const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'V', n, work.data(), n, w.data(), nullptr, 1,
                                          vr.data(), n);
    if (info != 0) throw NumericError("zgeev failed with info " + std::to_string(info), 0.0);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(vr);
    eigen_.values = std::move(w);
    eigen_.inverse = lu.inverse();
    const Eigen::VectorXd sv = singular_values(vr);
    eigen_.condition = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
    eigen_.vectors = std::move(vr);
  });
  return eigen_;
}

std::shared_ptr<const DampedOperator> assemble_operator(const DampingProfile& profile,
                                                        std::shared_ptr<const SpectralBasis> basis) {
  if (!basis || !basis->has_modes()) throw ShapeError("assembling a damped operator needs grid modes");
  if (profile.samples.size() != basis->mask()->interior_count()) {
    throw ShapeError("damping samples do not match the basis mask");
  }
  Eigen::MatrixXd m = mult_matrix(profile.samples, *basis).matrix.real();
  return std::make_shared<const DampedOperator>(std::move(basis), std::move(m));
}

SpectrumReport spectrum(const DampedOperator& op) {
  const Eigendecomposition& e = op.eigen();
  SpectrumReport r;
  r.k = op.size();
  r.h = op.basis()->h();
  r.eigenvector_condition = e.condition;
  std::vector<cplx> values(e.values.data(), e.values.data() + e.values.size());
  std::sort(values.begin(), values.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  r.eigenvalues = Eigen::Map<Eigen::VectorXcd>(values.data(), static_cast<Eigen::Index>(values.size()));
  r.sigma0_star = std::numeric_limits<double>::infinity();
  for (const cplx& v : values) {
    r.sigma0_star = std::min(r.sigma0_star, v.imag());
    if (v.imag() <= 0.0) ++r.nonpositive_count;
    if (v.imag() < -1e-10) ++r.negative_count;
  }
  return r;
}

std::string spectrum_csv(const SpectrumReport& report) {
  std::string out = "re,im\n";
  char line[96];
  for (const cplx& v : report.eigenvalues) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", v.real(), v.imag());
    out += line;
  }
  return out;
}

std::string spectrum_json(const SpectrumReport& report, std::uint64_t scene_hash) {
  nlohmann::ordered_json j;
  j["sigma0_star"] = report.sigma0_star;
  j["K"] = report.k;
  j["h"] = report.h;
  j["scene_hash"] = hash_hex(scene_hash);
  j["nonpositive_count"] = report.nonpositive_count;
  j["eigenvector_condition"] = report.eigenvector_condition;
  return j.dump(2) + "\n";
}

}  // namespace sdlab
