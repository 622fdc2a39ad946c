#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "sdlab/error.hpp"
#include "sdlab/laplacian.hpp"
#include "support.hpp"

using namespace sdlab;
using sdlab::test::box_scene;

namespace {

std::shared_ptr<const GridMask> mask_of(const SceneConfig& s, int n) {
  return std::make_shared<const GridMask>(rasterize(s, n));
}

// Closed-form 5-point eigenvalues of a (cx h) x (cy h) rectangle, ascending.
std::vector<double> rectangle_eigenvalues(int cx, int cy, double h) {
  std::vector<double> out;
  for (int m = 1; m < cx; ++m) {
    for (int n = 1; n < cy; ++n) {
      const double sx = std::sin(m * M_PI / (2.0 * cx));
      const double sy = std::sin(n * M_PI / (2.0 * cy));
      out.push_back(4.0 / (h * h) * (sx * sx + sy * sy));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::MatrixXd gram(const SpectralBasis& b) {
  Eigen::MatrixXd e(b.mask()->interior_count(), b.size());
  for (int j = 0; j < b.size(); ++j) e.col(j) = b.mode(j);
  return b.h() * b.h() * e.transpose() * e;
}

}  // namespace

TEST_CASE("single interior node gives [16]") {
  const auto mask = mask_of(box_scene(0, 0, 1, 1), 2);
  const StiffnessMatrix s = assemble_stiffness(mask);
  REQUIRE(s.size() == 1);
  CHECK(s.matrix.coeff(0, 0) == 16.0);
  const auto basis = eigenbasis(s, 1);
  CHECK(basis->gamma_sq()[0] == doctest::Approx(16.0));
  CHECK(residual_check(*basis, s) == 0.0);
}

TEST_CASE("unit box with h = 1/4 has the 5-point pattern") {
  const auto mask = mask_of(box_scene(0, 0, 1, 1), 4);
  const StiffnessMatrix s = assemble_stiffness(mask);
  REQUIRE(s.size() == 9);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(9, 9);
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 3; ++i) {
      const int r = j * 3 + i;
      expected(r, r) = 64.0;
      if (i > 0) expected(r, r - 1) = -16.0;
      if (i < 2) expected(r, r + 1) = -16.0;
      if (j > 0) expected(r, r - 3) = -16.0;
      if (j < 2) expected(r, r + 3) = -16.0;
    }
  }
  const Eigen::MatrixXd dense = Eigen::MatrixXd(s.matrix);
  CHECK((dense - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stiffness is exactly symmetric on an obstacle domain") {
  const StiffnessMatrix s = assemble_stiffness(mask_of(sdlab::test::small_two_disc(), 4));
  const Eigen::SparseMatrix<double> t = s.matrix.transpose();
  CHECK((s.matrix - t).norm() == 0.0);
}

TEST_CASE("unit box eigenvalues match the closed form") {
  const auto mask = mask_of(box_scene(0, 0, 1, 1), 16);
  const StiffnessMatrix s = assemble_stiffness(mask);
  const auto basis = eigenbasis(s, s.size());
  const auto exact = rectangle_eigenvalues(16, 16, 1.0 / 16);
  double worst = 0.0;
  for (int j = 0; j < basis->size(); ++j) worst = std::max(worst, sdlab::test::rel(basis->gamma_sq()[j], exact[j]));
  CHECK(worst <= 1e-8);
  CHECK(sdlab::test::rel(basis->gamma_sq().sum(), Eigen::MatrixXd(s.matrix).trace()) <= 1e-8);
}

TEST_CASE("shift-invert path matches the closed form on a rectangle") {
  const auto mask = mask_of(box_scene(0, 0, 2, 1), 24);
  const StiffnessMatrix s = assemble_stiffness(mask);
  EigenOptions options;
  options.dense_threshold = 50;
  options.window_size = 12;
  const auto basis = eigenbasis(s, 60, options);
  const auto exact = rectangle_eigenvalues(48, 24, 1.0 / 24);
  double worst = 0.0;
  for (int j = 0; j < 60; ++j) worst = std::max(worst, sdlab::test::rel(basis->gamma_sq()[j], exact[j]));
  CHECK(worst <= 1e-8);
  CHECK(basis->max_residual() <= 1e-8);
}

TEST_CASE("smallest unit-box eigenvalue approaches 2 pi^2") {
  const auto mask = mask_of(box_scene(0, 0, 1, 1), 64);
  const auto basis = eigenbasis(assemble_stiffness(mask), 1);
  CHECK(sdlab::test::rel(basis->gamma_sq()[0], 2 * M_PI * M_PI) <= 0.02);
}

TEST_CASE("modes are orthonormal and sign-normalized") {
  const Level& l = sdlab::test::small_level(4, 60);
  const Eigen::MatrixXd g = gram(*l.basis);
  CHECK((g - Eigen::MatrixXd::Identity(60, 60)).cwiseAbs().maxCoeff() <= 1e-10);
  for (int j = 0; j < l.basis->size(); ++j) {
    const Eigen::VectorXd e = l.basis->mode(j);
    const double noise = 1e-8 * e.cwiseAbs().maxCoeff();
    Eigen::Index first = 0;
    while (std::abs(e[first]) <= noise) ++first;
    CHECK(e[first] > 0.0);
  }
  const auto& gs = l.basis->gamma_sq();
  for (int j = 1; j < gs.size(); ++j) CHECK(gs[j] >= gs[j - 1]);
  CHECK(residual_check(*l.basis, assemble_stiffness(l.mask)) <= 1e-8);
}

TEST_CASE("symmetry sectors reproduce the plain eigensolve") {
  const auto mask = mask_of(sdlab::test::small_two_disc(), 4);
  const StiffnessMatrix s = assemble_stiffness(mask);
  CHECK(detect_symmetry(*mask).order() == 4);
  EigenOptions plain;
  plain.use_symmetry = false;
  const auto a = eigenbasis(s, 40);
  const auto b = eigenbasis(s, 40, plain);
  for (int j = 0; j < 40; ++j) CHECK(sdlab::test::rel(a->gamma_sq()[j], b->gamma_sq()[j]) <= 1e-10);
  // Same spectral projector on a non-degenerate mode.
  const double overlap = std::abs(a->mode(0).dot(b->mode(0))) * s.h * s.h;
  CHECK(overlap == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("perturbed modes fail the residual check") {
  const auto mask = mask_of(box_scene(0, 0, 1, 1), 8);
  const StiffnessMatrix s = assemble_stiffness(mask);
  const auto basis = eigenbasis(s, 5);
  Eigen::MatrixXd modes(mask->interior_count(), 5);
  for (int j = 0; j < 5; ++j) modes.col(j) = basis->mode(j);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < modes.rows(); ++i) modes(i, 2) += 1e-3 * normal(rng);
  const auto noisy = SpectralBasis::from_modes(mask, basis->gamma_sq(), modes);
  CHECK(residual_check(*basis, s) <= 1e-8);
  CHECK(residual_check(*noisy, s) > 1e-4);
}

TEST_CASE("removing an obstacle does not raise the ground state") {
  SceneConfig with = box_scene(-3, -3, 3, 3);
  with.obstacles = {{{0, 0}, 1}};
  const auto a = eigenbasis(assemble_stiffness(mask_of(with, 4)), 1);
  const auto b = eigenbasis(assemble_stiffness(mask_of(box_scene(-3, -3, 3, 3), 4)), 1);
  CHECK(b->gamma_sq()[0] <= a->gamma_sq()[0]);
}

TEST_CASE("low eigenvalues are stable under refinement") {
  const Level& coarse = sdlab::test::small_level(8, 40);
  const Level& fine = sdlab::test::small_level(16, 40);
  for (int j = 0; j < 20; ++j) CHECK(sdlab::test::rel(fine.basis->gamma_sq()[j], coarse.basis->gamma_sq()[j]) <= 0.05);
}

TEST_CASE("basis cache round trip") {
  const Level& l = sdlab::test::small_level(4, 60);
  const auto path = (std::filesystem::temp_directory_path() / "sdlab_basis_roundtrip.bin").string();
  l.basis->save(path, 42);
  const auto back = SpectralBasis::load(path, l.mask, 42, 60);
  REQUIRE(back != nullptr);
  CHECK((back->gamma_sq() - l.basis->gamma_sq()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back->mode(17) - l.basis->mode(17)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(SpectralBasis::load(path, l.mask, 43, 60) == nullptr);
  CHECK(SpectralBasis::load(path, l.mask, 42, 59) == nullptr);
  std::filesystem::remove(path);
}

TEST_CASE("synthesize and project are inverse on the span") {
  const Level& l = sdlab::test::small_level(4, 60);
  std::mt19937_64 rng(8);
  const Eigen::VectorXcd c = sdlab::test::random_vector(60, rng);
  CHECK((l.basis->project(l.basis->synthesize(c)) - c).norm() <= 1e-10 * c.norm());
}

TEST_CASE("basis construction errors") {
  CHECK_THROWS_AS(SpectralBasis::from_eigenvalues(Eigen::VectorXd()), DomainError);
  CHECK_THROWS_AS(SpectralBasis::from_eigenvalues(Eigen::Vector2d(2.0, 1.0)), DomainError);
  CHECK_THROWS_AS(SpectralBasis::from_eigenvalues(Eigen::Vector2d(0.0, 1.0)), DomainError);
  const auto mask = mask_of(box_scene(0, 0, 1, 1), 4);
  CHECK_THROWS(eigenbasis(assemble_stiffness(mask), 10));
  CHECK_THROWS_AS(SpectralBasis::from_eigenvalues(Eigen::Vector2d(1.0, 2.0))->mode(0), ShapeError);
}
