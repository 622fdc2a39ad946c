#include <algorithm>
#include <cmath>
#include <random>

#include "sdlab/damped_operator.hpp"
#include "sdlab/error.hpp"
#include "support.hpp"

using namespace sdlab;
using sdlab::test::random_vector;

namespace {

double min_hermitian_eigenvalue(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues()[0];
}

}  // namespace

TEST_CASE("smooth transition") {
  CHECK(smooth_transition(-1.0) == 1.0);
  CHECK(smooth_transition(0.0) == 1.0);
  CHECK(smooth_transition(1.0) == 0.0);
  CHECK(smooth_transition(2.0) == 0.0);
  CHECK(smooth_transition(0.5) == doctest::Approx(0.5).epsilon(1e-15));
  double previous = 1.0;
  for (int i = 1; i < 1000; ++i) {
    const double t = i / 1000.0;
    const double v = smooth_transition(t);
    CHECK(v <= previous);
    CHECK(std::abs(v + smooth_transition(1.0 - t) - 1.0) <= 1e-14);
    previous = v;
  }
}

TEST_CASE("damping profile plateau, support and midpoint") {
  const Level& l = test::small_level(4, 40);
  const SceneConfig scene = test::small_two_disc();
  const DampingProfile p = damping_profile(scene, *l.mask);
  bool plateau = true;
  bool support = true;
  bool midpoint = false;
  for (int idx = 0; idx < l.mask->interior_count(); ++idx) {
    const double d = l.mask->boundary_distance(l.mask->interior_nodes()[idx]);
    if (d <= scene.eps0) plateau = plateau && p.samples[idx] == scene.amplitude;
    if (d >= 2 * scene.eps0) support = support && p.samples[idx] == 0.0;
    if (std::abs(d - 1.5 * scene.eps0) < 1e-12) {
      midpoint = true;
      CHECK(p.samples[idx] == doctest::Approx(scene.amplitude / 2).epsilon(1e-14));
    }
  }
  CHECK(plateau);
  CHECK(support);
  CHECK(midpoint);

  // Monotone in the distance to the box boundary.
  std::vector<std::pair<double, double>> by_distance;
  for (int idx = 0; idx < l.mask->interior_count(); ++idx) {
    by_distance.emplace_back(l.mask->boundary_distance(l.mask->interior_nodes()[idx]), p.samples[idx]);
  }
  std::sort(by_distance.begin(), by_distance.end());
  for (std::size_t i = 1; i < by_distance.size(); ++i) CHECK(by_distance[i].second <= by_distance[i - 1].second);

  SceneConfig bad = scene;
  bad.eps0 = 1.2;
  CHECK_THROWS_AS(damping_profile(bad, *l.mask), InvalidSceneError);
}

TEST_CASE("interior cutoff vanishes on the collar") {
  const Level& l = test::small_level(4, 40);
  const SceneConfig scene = test::small_two_disc();
  const Eigen::VectorXd psi = interior_cutoff(scene, *l.mask);
  for (int idx = 0; idx < l.mask->interior_count(); ++idx) {
    const double d = l.mask->boundary_distance(l.mask->interior_nodes()[idx]);
    if (d <= scene.eps0 / 3) CHECK(psi[idx] == 0.0);
    if (d >= scene.eps0 / 2) CHECK(psi[idx] == 1.0);
  }
}

TEST_CASE("zero damping gives the self-adjoint operator") {
  const Level& l = test::small_level(4, 40);
  const auto op = assemble_operator(constant_profile(*l.mask, 0.0), l.basis);
  CHECK(op->damping().cwiseAbs().maxCoeff() == 0.0);
  Eigen::MatrixXcd lambda = l.basis->gamma_sq().cast<cplx>().asDiagonal();
  CHECK((op->matrix() - lambda).cwiseAbs().maxCoeff() == 0.0);
  const SpectrumReport r = spectrum(*op);
  CHECK(std::abs(r.sigma0_star) <= 1e-10);
  for (int j = 0; j < 40; ++j) CHECK(test::rel(r.eigenvalues[j].real(), l.basis->gamma_sq()[j]) <= 1e-12);
}

TEST_CASE("full damping gives B = Lambda^{1/2} and spectrum gamma^2 + i gamma") {
  const Level& l = test::small_level(4, 40);
  const auto op = assemble_operator(constant_profile(*l.mask, 1.0), l.basis);
  const Eigen::VectorXd gamma = l.basis->gamma_pow(1.0);
  const Eigen::MatrixXd expected = gamma.asDiagonal();
  CHECK((op->damping() - expected).cwiseAbs().maxCoeff() <= 1e-10 * gamma.maxCoeff());

  const auto diag = test::diagonal_operator(test::ramp(30), 1.0);
  const SpectrumReport r = spectrum(*diag);
  const Eigen::VectorXd g = diag->basis()->gamma_pow(1.0);
  for (int j = 0; j < 30; ++j) {
    const cplx want(g[j] * g[j], g[j]);
    CHECK(std::abs(r.eigenvalues[j] - want) <= 1e-12 * std::abs(want));
  }
  CHECK(r.sigma0_star == doctest::Approx(g[0]).epsilon(1e-12));
}

TEST_CASE("damping operator structure on the two-disc scene") {
  const Level& l = test::small_level(4, 60);
  const DampedOperator& op = *l.op;
  const Eigen::MatrixXd& b = op.damping();
  CHECK((b - b.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const double norm_b = Eigen::JacobiSVD<Eigen::MatrixXd>(b).singularValues()[0];
  CHECK(min_hermitian_eigenvalue(b) >= -1e-10 * norm_b);

  const Eigen::MatrixXcd skew = op.matrix() - op.matrix().adjoint();
  CHECK((skew - cplx(0, 2) * b.cast<cplx>()).cwiseAbs().maxCoeff() <= 1e-12 * norm_b);

  // Quadratic form evaluated two ways, and dissipativity.
  std::mt19937_64 rng(21);
  const Eigen::VectorXd gamma = l.basis->gamma_pow(1.0);
  double worst_form = 0.0;
  double worst_dissipation = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXcd u = random_vector(60, rng);
    const cplx bu = inner(b.cast<cplx>() * u, u);
    const Eigen::VectorXcd mu = op.multiplier().cast<cplx>() * u;
    const double direct = (gamma.array() * mu.cwiseAbs2().array()).sum();
    worst_form = std::max(worst_form, std::abs(bu.real() - direct) / std::max(direct, 1e-300));
    const double im = inner(op.matrix() * u, u).imag();
    worst_dissipation = std::min(worst_dissipation, im);
    CHECK(std::abs(im - bu.real()) <= 1e-10 * std::max(1.0, direct));
  }
  CHECK(worst_form <= 1e-12);
  CHECK(worst_dissipation >= -1e-10);
}

TEST_CASE("eigenvalues sit in the upper half-plane with the trace identity") {
  const Level& l = test::small_level(4, 60);
  const SpectrumReport r = spectrum(*l.op);
  CHECK(r.negative_count == 0);
  CHECK(r.sigma0_star > 0.0);
  CHECK(r.k == 60);
  CHECK(r.h == doctest::Approx(0.25));
  CHECK(test::rel(r.eigenvalues.imag().sum(), l.op->damping().trace()) <= 1e-8);
  for (int j = 1; j < r.k; ++j) CHECK(r.eigenvalues[j].real() >= r.eigenvalues[j - 1].real());
  const Eigendecomposition& e = l.op->eigen();
  const Eigen::MatrixXcd rebuilt = e.vectors * e.values.asDiagonal() * e.inverse;
  CHECK((rebuilt - l.op->matrix()).cwiseAbs().maxCoeff() <= 1e-8 * l.basis->gamma_sq().maxCoeff());
}

TEST_CASE("doubling the amplitude quadruples B") {
  const Level& l = test::small_level(4, 40);
  SceneConfig scene = test::small_two_disc();
  const auto one = assemble_operator(damping_profile(scene, *l.mask), l.basis);
  scene.amplitude = 2.0;
  const auto two = assemble_operator(damping_profile(scene, *l.mask), l.basis);
  CHECK((two->damping() - 4.0 * one->damping()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("spectrum serialization") {
  const auto diag = test::diagonal_operator(test::ramp(3), 1.0);
  const SpectrumReport r = spectrum(*diag);
  const std::string csv = spectrum_csv(r);
  CHECK(csv.rfind("re,im\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const std::string json = spectrum_json(r, 0x1234);
  CHECK(json.find("\"sigma0_star\"") != std::string::npos);
  CHECK(json.find("\"K\": 3") != std::string::npos);
}

TEST_CASE("operator construction errors") {
  const auto b = SpectralBasis::from_eigenvalues(test::ramp(4));
  CHECK_THROWS_AS(DampedOperator(b, Eigen::MatrixXd::Identity(3, 3)), ShapeError);
  const Level& l = test::small_level(4, 40);
  CHECK_THROWS_AS(assemble_operator(constant_profile(*l.mask, 1.0), b), ShapeError);
  DampingProfile short_profile;
  short_profile.samples = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(assemble_operator(short_profile, l.basis), ShapeError);
}
