#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sdlab/geometry.hpp"

namespace sdlab {

/// 5-point finite-difference realization of -Delta_D on the interior nodes of
/// a mask: 4/h^2 on the diagonal and -1/h^2 per interior neighbour.
struct StiffnessMatrix {
  Eigen::SparseMatrix<double> matrix;
  double h = 0.0;
  std::shared_ptr<const GridMask> mask;

  int size() const { return static_cast<int>(matrix.rows()); }
};

StiffnessMatrix assemble_stiffness(std::shared_ptr<const GridMask> mask);

/// Reflections about the box mid-lines under which the mask is invariant.
struct MirrorSymmetry {
  bool x = false;
  bool y = false;

  int order() const { return (x ? 2 : 1) * (y ? 2 : 1); }
};

MirrorSymmetry detect_symmetry(const GridMask& mask);

/// Mode values stored on a fundamental domain of the mirror group.
///
/// Group elements and parity characters are both encoded as two bits
/// (bit 0: x-reflection, bit 1: y-reflection); chi(g) = (-1)^popcount(c & g).
/// With the trivial group this degenerates to plain storage on every
/// interior node.
struct ModeStorage {
  MirrorSymmetry symmetry;
  /// Interior index of each representative node.
  std::vector<int> reps;
  /// For every interior node: its representative slot and the group element
  /// mapping the representative onto it.
  std::vector<int> rep_of;
  std::vector<std::uint8_t> element_of;
  /// Stabilizer size of each representative.
  std::vector<std::uint8_t> stabilizer;

  struct Sector {
    int character = 0;
    /// reps.size() x count nodal values; zero where the parity forces it.
    Eigen::MatrixXd values;
  };
  std::vector<Sector> sectors;
  /// For each global mode j: (sector index, column).
  std::vector<std::pair<int, int>> mode_slot;

  static int chi(int character, int element) {
    return (__builtin_popcount(static_cast<unsigned>(character & element)) & 1) ? -1 : 1;
  }
};

struct EigenOptions {
  /// Sectors at or below this size use a dense symmetric eigensolver.
  int dense_threshold = 1500;
  /// Target number of eigenpairs per shift-invert window.
  int window_size = 25;
  /// Exploit mirror symmetry of the mask when present.
  bool use_symmetry = true;
};

/// Lowest-K Dirichlet eigenpairs. Modes are orthonormal in the discrete L2
/// product <f, g> = h^2 sum f conj(g) and carry a deterministic sign (first
/// component above noise level is positive).
class SpectralBasis {
 public:
  /// A basis that only knows its eigenvalues. Used for diagnostic operators
  /// that never touch grid functions.
  static std::shared_ptr<const SpectralBasis> from_eigenvalues(Eigen::VectorXd gamma_sq);

  /// Wraps explicitly supplied modes (columns of nodal values over the
  /// interior nodes of the mask).
  static std::shared_ptr<const SpectralBasis> from_modes(std::shared_ptr<const GridMask> mask,
                                                         Eigen::VectorXd gamma_sq,
                                                         const Eigen::MatrixXd& modes);

  SpectralBasis(std::shared_ptr<const GridMask> mask, Eigen::VectorXd gamma_sq, ModeStorage storage,
                double max_residual);

  int size() const { return static_cast<int>(gamma_sq_.size()); }
  const Eigen::VectorXd& gamma_sq() const { return gamma_sq_; }
  Eigen::VectorXd gamma_pow(double s) const;
  double h() const { return mask_ ? mask_->h() : 0.0; }
  bool has_modes() const { return mask_ != nullptr; }
  const std::shared_ptr<const GridMask>& mask() const { return mask_; }
  const ModeStorage& storage() const { return storage_; }
  /// Residual max_j |S e_j - gamma_j^2 e_j| / gamma_j^2 measured when built.
  double max_residual() const { return max_residual_; }

  /// Nodal values of mode j on every interior node.
  Eigen::VectorXd mode(int j) const;
  /// sum_j c_j e_j on the interior nodes.
  Eigen::VectorXcd synthesize(const Eigen::VectorXcd& coeffs) const;
  /// Coefficients h^2 sum_x g(x) e_j(x).
  Eigen::VectorXcd project(const Eigen::VectorXcd& grid) const;
  /// G[j, k] = h^2 sum_x f(x) e_j(x) e_k(x).
  Eigen::MatrixXd weighted_gram(const Eigen::VectorXd& f) const;

  /// Raw binary cache; the header records h, K, grid dims and a caller hash.
  void save(const std::string& path, std::uint64_t scene_hash) const;
  static std::shared_ptr<const SpectralBasis> load(const std::string& path,
                                                   std::shared_ptr<const GridMask> mask,
                                                   std::uint64_t scene_hash, int count);

 private:
  void require_modes() const;

  std::shared_ptr<const GridMask> mask_;
  Eigen::VectorXd gamma_sq_;
  ModeStorage storage_;
  double max_residual_ = 0.0;
};

std::shared_ptr<const SpectralBasis> eigenbasis(const StiffnessMatrix& stiffness, int count,
                                                const EigenOptions& options = {});

double residual_check(const SpectralBasis& basis, const StiffnessMatrix& stiffness);

}  // namespace sdlab
