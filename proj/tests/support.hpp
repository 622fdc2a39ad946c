#pragma once

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <random>

#include "sdlab/calculus.hpp"
#include "sdlab/damped_operator.hpp"
#include "sdlab/geometry.hpp"
#include "sdlab/laplacian.hpp"
#include "sdlab/runner.hpp"

namespace sdlab::test {

inline SceneConfig box_scene(double x0, double y0, double x1, double y1) {
  SceneConfig s;
  s.box = {{x0, y0}, {x1, y1}};
  return s;
}

/// Two unit discs at (+-2, 0) in [-5, 5] x [-3, 3]: the preset geometry in a
/// smaller box, cheap enough for unit tests.
inline SceneConfig small_two_disc() {
  SceneConfig s = box_scene(-5.0, -3.0, 5.0, 3.0);
  s.obstacles = {{{-2.0, 0.0}, 1.0}, {{2.0, 0.0}, 1.0}};
  s.eps0 = 0.5;
  s.amplitude = 1.0;
  return s;
}

inline SceneConfig paper_scene() { return preset("paper-two-disc").scene; }

/// Builds (and memoizes per process) a small two-disc level.
inline const Level& small_level(int n, int k) {
  static std::vector<std::unique_ptr<Level>> cache;
  for (const auto& l : cache) {
    if (l->n == n && l->k == k) return *l;
  }
  cache.push_back(std::make_unique<Level>(build_level(small_two_disc(), n, k, DampingMode::Profile, "")));
  return *cache.back();
}

inline Eigen::VectorXcd random_vector(int k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXcd v(k);
  for (int j = 0; j < k; ++j) v[j] = {normal(rng), normal(rng)};
  return v;
}

inline Eigen::MatrixXcd random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXcd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = {normal(rng), normal(rng)};
  }
  return m;
}

/// Diagnostic operator on an eigenvalue-only basis with multiplier c * I.
inline std::shared_ptr<const DampedOperator> diagonal_operator(const Eigen::VectorXd& gamma_sq, double c) {
  auto basis = SpectralBasis::from_eigenvalues(gamma_sq);
  const int k = static_cast<int>(gamma_sq.size());
  return std::make_shared<const DampedOperator>(basis, Eigen::MatrixXd::Identity(k, k) * c);
}

inline Eigen::VectorXd ramp(int k) {
  Eigen::VectorXd g(k);
  for (int j = 0; j < k; ++j) g[j] = 1.0 + 0.75 * j + 0.01 * j * j;
  return g;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace sdlab::test
