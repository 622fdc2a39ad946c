#include "sdlab/laplacian.hpp"

#include <arpack/arpack.hpp>
#include <suitesparse/cholmod.h>

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <numbers>

#include "sdlab/error.hpp"
#include <chrono>
#include <cstdio>
#include <cstdlib>

namespace sdlab {

StiffnessMatrix assemble_stiffness(std::shared_ptr<const GridMask> mask) {
  if (!mask || mask->interior_count() == 0) {
    throw DegenerateDomainError("stiffness assembly needs at least one interior node");
  }
  const double h = mask->h();
  const double inv_h2 = 1.0 / (h * h);
  const int n = mask->interior_count();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(n) * 5);
  for (int row = 0; row < n; ++row) {
    const int node = mask->interior_nodes()[row];
    const int i = mask->node_i(node);
    const int j = mask->node_j(node);
    entries.emplace_back(row, row, 4.0 * inv_h2);
    const int neighbours[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
    for (const auto& nb : neighbours) {
      const int col = mask->index(nb[0], nb[1]);
      if (col >= 0) entries.emplace_back(row, col, -inv_h2);
    }
  }
  StiffnessMatrix s;
  s.matrix.resize(n, n);
  s.matrix.setFromTriplets(entries.begin(), entries.end());
  s.h = h;
  s.mask = std::move(mask);
  return s;
}

MirrorSymmetry detect_symmetry(const GridMask& mask) {
  const int mx = mask.cells_x();
  const int my = mask.cells_y();
  MirrorSymmetry sym{true, true};
  for (int j = 0; j <= my && (sym.x || sym.y); ++j) {
    for (int i = 0; i <= mx; ++i) {
      const bool v = mask.interior(i, j);
      if (sym.x && v != mask.interior(mx - i, j)) sym.x = false;
      if (sym.y && v != mask.interior(i, my - j)) sym.y = false;
    }
  }
  return sym;
}

namespace {

bool tracing() {
  static const bool on = std::getenv("SDLAB_TRACE") != nullptr;
  return on;
}

struct TraceClock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// Ritz residual tolerance; refinement and Rayleigh-Ritz recover the rest.
constexpr double kArpackTol = 1e-10;

ModeStorage make_skeleton(const GridMask& mask, MirrorSymmetry sym) {
  ModeStorage st;
  st.symmetry = sym;
  const int mx = mask.cells_x();
  const int my = mask.cells_y();
  const int n = mask.interior_count();
  st.rep_of.assign(n, -1);
  st.element_of.assign(n, 0);
  std::vector<int> slot_of_rep(n, -1);
  for (int idx = 0; idx < n; ++idx) {
    const int node = mask.interior_nodes()[idx];
    int i = mask.node_i(node);
    int j = mask.node_j(node);
    int g = 0;
    if (sym.x && i < mx - i) {
      i = mx - i;
      g |= 1;
    }
    if (sym.y && j < my - j) {
      j = my - j;
      g |= 2;
    }
    const int rep_idx = mask.index(i, j);
    if (slot_of_rep[rep_idx] < 0) {
      slot_of_rep[rep_idx] = static_cast<int>(st.reps.size());
      st.reps.push_back(rep_idx);
      int stab = 1;
      if (sym.x && 2 * i == mx) stab *= 2;
      if (sym.y && 2 * j == my) stab *= 2;
      st.stabilizer.push_back(static_cast<std::uint8_t>(stab));
    }
    st.rep_of[idx] = slot_of_rep[rep_idx];
    st.element_of[idx] = static_cast<std::uint8_t>(g);
  }
  return st;
}

// Character c is admissible at a representative iff it is trivial on the
// stabilizer; otherwise every mode of that parity vanishes there.
bool admissible(const GridMask& mask, const ModeStorage& st, int slot, int character) {
  const int node = mask.interior_nodes()[st.reps[slot]];
  const int i = mask.node_i(node);
  const int j = mask.node_j(node);
  if ((character & 1) && st.symmetry.x && 2 * i == mask.cells_x()) return false;
  if ((character & 2) && st.symmetry.y && 2 * j == mask.cells_y()) return false;
  return true;
}

using LDLT = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>>;

// METIS nested-dissection fill-reducing order of a symmetric matrix:
// order[k] is the original index placed at position k.
std::vector<int> nested_dissection(const Eigen::SparseMatrix<double>& m) {
  Eigen::SparseMatrix<double> lower = m.triangularView<Eigen::Lower>();
  lower.makeCompressed();
  const int n = static_cast<int>(m.rows());
  cholmod_common common;
  cholmod_start(&common);
  cholmod_sparse a{};
  a.nrow = a.ncol = static_cast<std::size_t>(n);
  a.nzmax = static_cast<std::size_t>(lower.nonZeros());
  a.p = lower.outerIndexPtr();
  a.i = lower.innerIndexPtr();
  a.x = lower.valuePtr();
  a.stype = -1;
  a.itype = CHOLMOD_INT;
  a.xtype = CHOLMOD_REAL;
  a.dtype = CHOLMOD_DOUBLE;
  a.sorted = 1;
  a.packed = 1;
  std::vector<int> order(n);
  const int ok = cholmod_metis(&a, nullptr, 0, 1, order.data(), &common);
  cholmod_finish(&common);
  if (!ok) std::iota(order.begin(), order.end(), 0);
  return order;
}

// One parity sector: the symmetrized folded operator W^{1/2} T W^{-1/2}.
class SectorProblem {
 public:
  SectorProblem(const StiffnessMatrix& s, const ModeStorage& st, int character, int dense_threshold)
      : character_(character) {
    const GridMask& mask = *s.mask;
    const int reps = static_cast<int>(st.reps.size());
    local_of_slot_.assign(reps, -1);
    for (int slot = 0; slot < reps; ++slot) {
      if (admissible(mask, st, slot, character)) {
        local_of_slot_[slot] = static_cast<int>(slots_.size());
        slots_.push_back(slot);
      }
    }
    const int n = static_cast<int>(slots_.size());
    dense_ = n <= dense_threshold;
    matrix_ = build(s, st);
    if (!dense_) {
      const std::vector<int> order = nested_dissection(matrix_);
      std::vector<int> reordered(n);
      for (int k = 0; k < n; ++k) reordered[k] = slots_[order[k]];
      slots_ = std::move(reordered);
      matrix_ = build(s, st);
    }
  }
  int size() const { return static_cast<int>(slots_.size()); }
  int character() const { return character_; }
  bool dense() const { return dense_; }
  const std::vector<int>& slots() const { return slots_; }
  const Eigen::VectorXd& orbit() const { return orbit_; }
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }

  int count_below(double sigma) {
    if (dense_) {
      solve_dense();
      return static_cast<int>(std::count_if(dense_values_.begin(), dense_values_.end(),
                                            [&](double v) { return v < sigma; }));
    }
    factor(sigma);
    const auto& d = ldlt_.vectorD();
    return static_cast<int>((d.array() < 0.0).count());
  }

  /// All eigenpairs below cutoff, ascending.
  void solve_below(double cutoff, int expected, int window_size, Eigen::VectorXd& values,
                   Eigen::MatrixXd& vectors) {
    if (dense_) {
      solve_dense();
      int count = 0;
      while (count < dense_values_.size() && dense_values_[count] < cutoff) ++count;
      values = dense_values_.head(count);
      vectors = dense_vectors_.leftCols(count);
      return;
    }
    const int n = size();
    std::vector<double> found_values;
    Eigen::MatrixXd found(n, 0);
    found.resize(n, expected);
    int filled = 0;
    const int windows = std::max(1, (expected + window_size - 1) / window_size);
    std::vector<double> bounds{0.0};
    std::vector<int> counts{0};
    for (int w = 1; w < windows; ++w) {
      const double b = cutoff * static_cast<double>(w) / windows;
      bounds.push_back(b);
      counts.push_back(count_below(b));
    }
    bounds.push_back(cutoff);
    counts.push_back(expected);
    for (std::size_t w = 1; w < bounds.size(); ++w) {
      const int in_window = counts[w] - counts[w - 1];
      if (in_window <= 0) continue;
      std::vector<double> vals;
      Eigen::MatrixXd vecs;
      solve_window(bounds[w - 1], bounds[w], in_window, vals, vecs);
      for (std::size_t k = 0; k < vals.size(); ++k) {
        found_values.push_back(vals[k]);
        found.col(filled++) = vecs.col(static_cast<Eigen::Index>(k));
      }
    }
    if (filled != expected) {
      throw NumericError("sector eigensolve found " + std::to_string(filled) + " of " +
                             std::to_string(expected) + " eigenpairs",
                         0.0);
    }
    rayleigh_ritz(found, values);
    vectors = std::move(found);
  }

 private:
  Eigen::SparseMatrix<double> build(const StiffnessMatrix& s, const ModeStorage& st) {
    const int n = static_cast<int>(slots_.size());
    std::fill(local_of_slot_.begin(), local_of_slot_.end(), -1);
    for (int l = 0; l < n; ++l) local_of_slot_[slots_[l]] = l;
    const int order = st.symmetry.order();
    orbit_.resize(n);
    for (int l = 0; l < n; ++l) orbit_[l] = static_cast<double>(order / st.stabilizer[slots_[l]]);

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(n) * 5);
    for (int l = 0; l < n; ++l) {
      const int row = st.reps[slots_[l]];
      for (Eigen::SparseMatrix<double>::InnerIterator it(s.matrix, row); it; ++it) {
        const int y = static_cast<int>(it.row());
        const int lp = local_of_slot_[st.rep_of[y]];
        if (lp < 0) continue;
        const double v = ModeStorage::chi(character_, st.element_of[y]) * it.value();
        entries.emplace_back(l, lp, std::sqrt(orbit_[l] / orbit_[lp]) * v);
      }
    }
    Eigen::SparseMatrix<double> c(n, n);
    c.setFromTriplets(entries.begin(), entries.end());
    Eigen::SparseMatrix<double> ct = c.transpose();
    Eigen::SparseMatrix<double> sym = 0.5 * (c + ct);
    sym.makeCompressed();
    return sym;
  }

  void solve_dense() {
    if (dense_values_.size() == size()) return;
    Eigen::MatrixXd m(matrix_);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError("dense symmetric eigensolver failed", 0.0);
    dense_values_ = es.eigenvalues();
    dense_vectors_ = es.eigenvectors();
  }

  double factor(double sigma) {
    if (!analyzed_) {
      ldlt_.analyzePattern(matrix_);
      analyzed_ = true;
    }
    Eigen::SparseMatrix<double> shifted = matrix_;
    for (int attempt = 0; attempt < 4; ++attempt) {
      shifted = matrix_;
      shifted.diagonal().array() -= sigma;
      TraceClock clock;
      ldlt_.factorize(shifted);
      if (tracing()) std::fprintf(stderr, "  factor n=%d sigma=%.4g %.2fs\n", size(), sigma, clock.seconds());
      if (ldlt_.info() == Eigen::Success && (ldlt_.vectorD().array() != 0.0).all()) return sigma;
      sigma += 1e-7 * std::max(1.0, std::abs(sigma));
    }
    throw NumericError("shifted LDL^T factorization failed", 0.0);
  }

  void solve_window(double lo, double hi, int count, std::vector<double>& values, Eigen::MatrixXd& vectors) {
    const int n = size();
    const double sigma = factor(0.5 * (lo + hi));
    int nev = count + std::max(4, count / 5);
    for (int attempt = 0; attempt < 4; ++attempt) {
      nev = std::min(nev, n - 2);
      const int ncv = std::min(n, std::max(2 * nev + 1, nev + 20));
      TraceClock clock;
      double solve_time = 0.0;
      a_int ido = 0;
      a_int info = 0;
      Eigen::VectorXd resid(n);
      Eigen::MatrixXd basis(n, ncv);
      Eigen::VectorXd workd(3 * n);
      Eigen::VectorXd workl(static_cast<Eigen::Index>(ncv) * (ncv + 8));
      a_int iparam[11] = {0};
      a_int ipntr[14] = {0};
      iparam[0] = 1;
      iparam[2] = 1000;
      iparam[6] = 1;
      while (true) {
        arpack::saupd(ido, arpack::bmat::identity, n, arpack::which::largest_magnitude, nev, kArpackTol,
                      resid.data(), ncv, basis.data(), n, iparam, ipntr, workd.data(), workl.data(),
                      static_cast<a_int>(workl.size()), info);
        if (ido != 1 && ido != -1) break;
        Eigen::Map<Eigen::VectorXd> x(workd.data() + ipntr[0] - 1, n);
        Eigen::Map<Eigen::VectorXd> y(workd.data() + ipntr[1] - 1, n);
        TraceClock sc;
        y = ldlt_.solve(x);
        solve_time += sc.seconds();
      }
      if (tracing()) {
        std::fprintf(stderr, "  window [%.4g, %.4g) count=%d nev=%d ncv=%d iters=%d ops=%d %.2fs (solves %.2fs, L nnz %ld)\n", lo, hi,
                     count, nev, ncv, static_cast<int>(iparam[2]), static_cast<int>(iparam[8]), clock.seconds(),
                     solve_time, static_cast<long>(ldlt_.matrixL().nestedExpression().nonZeros()));
      }
      if (info < 0) throw NumericError("ARPACK saupd failed with info " + std::to_string(info), 0.0);
      const int converged = static_cast<int>(iparam[4]);
      if (converged < nev) {
        nev += count;
        continue;
      }
      std::vector<a_int> select(ncv);
      Eigen::VectorXd theta(nev);
      a_int einfo = 0;
      arpack::seupd(1, arpack::howmny::ritz_vectors, select.data(), theta.data(), basis.data(), n, 0.0,
                    arpack::bmat::identity, n, arpack::which::largest_magnitude, nev, kArpackTol, resid.data(), ncv,
                    basis.data(), n, iparam, ipntr, workd.data(), workl.data(),
                    static_cast<a_int>(workl.size()), einfo);
      if (einfo != 0) throw NumericError("ARPACK seupd failed with info " + std::to_string(einfo), 0.0);
      std::vector<int> keep;
      values.clear();
      for (int k = 0; k < nev; ++k) {
        const double lambda = sigma + 1.0 / theta[k];
        if (lambda >= lo && lambda < hi) {
          keep.push_back(k);
          values.push_back(lambda);
        }
      }
      if (static_cast<int>(keep.size()) == count) {
        vectors.resize(n, count);
        for (int k = 0; k < count; ++k) vectors.col(k) = basis.col(keep[k]);
        // LDL^T without pivoting can lose accuracy at indefinite shifts; one
        // inverse-iteration step with a refined solve restores it.
        double worst = 0.0;
        for (int k = 0; k < count; ++k) {
          const auto y = vectors.col(k);
          worst = std::max(worst, (matrix_ * y - values[k] * y).norm() / std::abs(values[k]));
        }
        if (worst > 1e-10) {
          for (int k = 0; k < count; ++k) {
            const Eigen::VectorXd y = vectors.col(k);
            Eigen::VectorXd z = ldlt_.solve(y);
            const Eigen::VectorXd r = y - (matrix_ * z - sigma * z);
            z += ldlt_.solve(r);
            vectors.col(k) = z / z.norm();
          }
        }
        if (tracing()) std::fprintf(stderr, "  window residual %.3g%s\n", worst, worst > 1e-10 ? " (refined)" : "");
        return;
      }
      nev += count;
    }
    throw NumericError("shift-invert window [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           ") did not capture its " + std::to_string(count) + " eigenvalues",
                       0.0);
  }

  // Orthonormalize and diagonalize on the span; repairs the small loss of
  // orthogonality between eigenvectors from different windows.
  void rayleigh_ritz(Eigen::MatrixXd& y, Eigen::VectorXd& values) const {
    Eigen::MatrixXd gram = y.transpose() * y;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("window eigenvectors are linearly dependent", 0.0);
    Eigen::MatrixXd linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
    y = y * linv.transpose();
    Eigen::MatrixXd cy = matrix_ * y;
    Eigen::MatrixXd projected = y.transpose() * cy;
    cy.resize(0, 0);
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(projected);
    values = es.eigenvalues();
    y = y * es.eigenvectors();
    if (tracing()) {
      double worst = 0.0;
      for (int k = 0; k < y.cols(); ++k) {
        const auto c = y.col(k);
        worst = std::max(worst, (matrix_ * c - values[k] * c).norm() / (std::abs(values[k]) * c.norm()));
      }
      std::fprintf(stderr, "  after Rayleigh-Ritz residual %.3g\n", worst);
    }
  }

  int character_;
  std::vector<int> slots_;
  std::vector<int> local_of_slot_;
  Eigen::VectorXd orbit_;
  Eigen::SparseMatrix<double> matrix_;
  bool dense_ = false;
  Eigen::VectorXd dense_values_;
  Eigen::MatrixXd dense_vectors_;
  LDLT ldlt_;
  bool analyzed_ = false;
};

// Weyl estimate of the count-th Dirichlet eigenvalue.
double weyl_guess(const GridMask& mask, int count) {
  const double area = mask.interior_count() * mask.h() * mask.h();
  const double perimeter = 2.0 * (mask.box().width() + mask.box().height());
  const double x = (perimeter + std::sqrt(perimeter * perimeter + 16.0 * std::numbers::pi * area * count)) /
                   (2.0 * area);
  return x * x;
}

void fix_signs(const GridMask& mask, ModeStorage& st) {
  const int n = mask.interior_count();
  for (std::size_t j = 0; j < st.mode_slot.size(); ++j) {
    auto [sector, col] = st.mode_slot[j];
    auto values = st.sectors[sector].values.col(col);
    const double threshold = 1e-8 * values.cwiseAbs().maxCoeff();
    const int character = st.sectors[sector].character;
    for (int idx = 0; idx < n; ++idx) {
      const double v = ModeStorage::chi(character, st.element_of[idx]) * values[st.rep_of[idx]];
      if (std::abs(v) > threshold) {
        if (v < 0.0) values = -values;
        break;
      }
    }
  }
}

}  // namespace

std::shared_ptr<const SpectralBasis> eigenbasis(const StiffnessMatrix& stiffness, int count,
                                                const EigenOptions& options) {
  const int n = stiffness.size();
  if (count < 1 || count > n) {
    throw DomainError("mode count " + std::to_string(count) + " outside [1, " + std::to_string(n) + "]");
  }
  const GridMask& mask = *stiffness.mask;
  const MirrorSymmetry sym = options.use_symmetry ? detect_symmetry(mask) : MirrorSymmetry{};
  ModeStorage st = make_skeleton(mask, sym);

  std::vector<std::unique_ptr<SectorProblem>> sectors;
  for (int c = 0; c < 4; ++c) {
    if ((c & 1) && !sym.x) continue;
    if ((c & 2) && !sym.y) continue;
    sectors.push_back(std::make_unique<SectorProblem>(stiffness, st, c, options.dense_threshold));
  }

  // Pick a cutoff below which at least `count` eigenvalues lie, using
  // Sylvester inertia on each sector.
  double cutoff = std::numeric_limits<double>::infinity();
  std::vector<int> per_sector(sectors.size());
  const bool all_dense =
      std::all_of(sectors.begin(), sectors.end(), [](const auto& p) { return p->dense(); });
  if (!all_dense) {
    cutoff = 1.05 * weyl_guess(mask, count);
    for (int iter = 0;; ++iter) {
      int total = 0;
      for (std::size_t s = 0; s < sectors.size(); ++s) {
        per_sector[s] = sectors[s]->count_below(cutoff);
        total += per_sector[s];
      }
      if (total >= count && (total <= count + count / 4 + 16 || iter >= 20)) break;
      if (iter >= 40) throw NumericError("could not bracket the lowest eigenvalues", 0.0);
      if (total < count) {
        cutoff *= total == 0 ? 4.0 : std::min(4.0, 1.05 * count / total);
      } else {
        cutoff *= std::max(0.5, (count + 0.1 * (total - count)) / total);
      }
    }
  }

  struct Entry {
    double value;
    int sector;
    int column;
  };
  std::vector<Entry> entries;
  std::vector<Eigen::MatrixXd> sector_vectors(sectors.size());
  std::vector<Eigen::VectorXd> sector_values(sectors.size());
  for (std::size_t s = 0; s < sectors.size(); ++s) {
    sectors[s]->solve_below(cutoff, per_sector[s], options.window_size, sector_values[s], sector_vectors[s]);
    for (int k = 0; k < sector_values[s].size(); ++k) {
      sector_vectors[s].col(k).normalize();
      entries.push_back({sector_values[s][k], static_cast<int>(s), k});
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.sector != b.sector) return a.sector < b.sector;
    return a.column < b.column;
  });
  if (static_cast<int>(entries.size()) < count) {
    throw NumericError("eigensolver returned too few eigenpairs", 0.0);
  }
  entries.resize(count);

  // Keep only the retained columns, mapped back to nodal values on every
  // representative slot.
  const int reps = static_cast<int>(st.reps.size());
  const double h = mask.h();
  double worst_residual = 0.0;
  std::vector<std::vector<int>> used(sectors.size());
  for (const auto& e : entries) used[e.sector].push_back(e.column);
  std::vector<std::vector<int>> new_col(sectors.size());
  Eigen::VectorXd gamma_sq(count);
  for (std::size_t s = 0; s < sectors.size(); ++s) {
    auto& cols = used[s];
    std::sort(cols.begin(), cols.end());
    new_col[s].assign(sector_vectors[s].cols(), -1);
    ModeStorage::Sector sector;
    sector.character = sectors[s]->character();
    sector.values = Eigen::MatrixXd::Zero(reps, static_cast<Eigen::Index>(cols.size()));
    const auto& slots = sectors[s]->slots();
    const auto& orbit = sectors[s]->orbit();
    for (std::size_t c = 0; c < cols.size(); ++c) {
      new_col[s][cols[c]] = static_cast<int>(c);
      const auto y = sector_vectors[s].col(cols[c]);
      // The sector residual equals the full-grid residual of the unfolded mode.
      const double lambda = sector_values[s][cols[c]];
      worst_residual = std::max(worst_residual, (sectors[s]->matrix() * y - lambda * y).norm() / lambda);
      for (std::size_t l = 0; l < slots.size(); ++l) {
        sector.values(slots[l], static_cast<Eigen::Index>(c)) = y[static_cast<Eigen::Index>(l)] / (h * std::sqrt(orbit[l]));
      }
    }
    sector_vectors[s].resize(0, 0);
    st.sectors.push_back(std::move(sector));
  }
  for (int j = 0; j < count; ++j) {
    gamma_sq[j] = entries[j].value;
    st.mode_slot.emplace_back(entries[j].sector, new_col[entries[j].sector][entries[j].column]);
  }
  fix_signs(mask, st);
  if (!(worst_residual <= 1e-8)) {
    throw NumericError("eigenpairs failed the residual gate", worst_residual);
  }
  return std::make_shared<const SpectralBasis>(stiffness.mask, std::move(gamma_sq), std::move(st),
                                               worst_residual);
}

SpectralBasis::SpectralBasis(std::shared_ptr<const GridMask> mask, Eigen::VectorXd gamma_sq, ModeStorage storage,
                             double max_residual)
    : mask_(std::move(mask)),
      gamma_sq_(std::move(gamma_sq)),
      storage_(std::move(storage)),
      max_residual_(max_residual) {
  if (gamma_sq_.size() == 0) throw DomainError("a spectral basis needs at least one mode");
  if ((gamma_sq_.array() <= 0.0).any()) throw DomainError("eigenvalues must be positive");
  for (Eigen::Index j = 1; j < gamma_sq_.size(); ++j) {
    if (gamma_sq_[j] < gamma_sq_[j - 1]) throw DomainError("eigenvalues must be nondecreasing");
  }
}

std::shared_ptr<const SpectralBasis> SpectralBasis::from_eigenvalues(Eigen::VectorXd gamma_sq) {
  return std::make_shared<const SpectralBasis>(nullptr, std::move(gamma_sq), ModeStorage{}, 0.0);
}

std::shared_ptr<const SpectralBasis> SpectralBasis::from_modes(std::shared_ptr<const GridMask> mask,
                                                               Eigen::VectorXd gamma_sq,
                                                               const Eigen::MatrixXd& modes) {
  if (!mask) throw ShapeError("explicit modes need a mask");
  const int n = mask->interior_count();
  if (modes.rows() != n || modes.cols() != gamma_sq.size()) {
    throw ShapeError("mode matrix must be interior_count x K");
  }
  ModeStorage st = make_skeleton(*mask, MirrorSymmetry{});
  ModeStorage::Sector sector;
  sector.character = 0;
  sector.values = modes;
  st.sectors.push_back(std::move(sector));
  for (int j = 0; j < modes.cols(); ++j) st.mode_slot.emplace_back(0, j);
  auto basis = std::make_shared<SpectralBasis>(mask, std::move(gamma_sq), std::move(st), 0.0);
  basis->max_residual_ = residual_check(*basis, assemble_stiffness(mask));
  return basis;
}

Eigen::VectorXd SpectralBasis::gamma_pow(double s) const {
  return gamma_sq_.array().pow(0.5 * s).matrix();
}

void SpectralBasis::require_modes() const {
  if (!has_modes()) throw ShapeError("operation needs grid modes but the basis only has eigenvalues");
}

Eigen::VectorXd SpectralBasis::mode(int j) const {
  require_modes();
  if (j < 0 || j >= size()) throw DomainError("mode index out of range");
  const auto [sector, col] = storage_.mode_slot[j];
  const auto& sec = storage_.sectors[sector];
  const int n = mask_->interior_count();
  Eigen::VectorXd out(n);
  for (int idx = 0; idx < n; ++idx) {
    out[idx] = ModeStorage::chi(sec.character, storage_.element_of[idx]) * sec.values(storage_.rep_of[idx], col);
  }
  return out;
}

Eigen::VectorXcd SpectralBasis::synthesize(const Eigen::VectorXcd& coeffs) const {
  require_modes();
  if (coeffs.size() != size()) throw ShapeError("coefficient vector length must equal K");
  const int n = mask_->interior_count();
  const int reps = static_cast<int>(storage_.reps.size());
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  for (std::size_t s = 0; s < storage_.sectors.size(); ++s) {
    const auto& sec = storage_.sectors[s];
    Eigen::VectorXcd local = Eigen::VectorXcd::Zero(sec.values.cols());
    for (int j = 0; j < size(); ++j) {
      if (storage_.mode_slot[j].first == static_cast<int>(s)) local[storage_.mode_slot[j].second] = coeffs[j];
    }
    Eigen::VectorXcd on_reps(reps);
    on_reps = sec.values.cast<std::complex<double>>() * local;
    for (int idx = 0; idx < n; ++idx) {
      out[idx] += static_cast<double>(ModeStorage::chi(sec.character, storage_.element_of[idx])) *
                  on_reps[storage_.rep_of[idx]];
    }
  }
  return out;
}

Eigen::VectorXcd SpectralBasis::project(const Eigen::VectorXcd& grid) const {
  require_modes();
  const int n = mask_->interior_count();
  if (grid.size() != n) throw ShapeError("grid vector length must equal the interior node count");
  const double h2 = h() * h();
  Eigen::VectorXcd out(size());
  for (int j = 0; j < size(); ++j) out[j] = h2 * mode(j).cast<std::complex<double>>().dot(grid);
  return out;
}

Eigen::MatrixXd SpectralBasis::weighted_gram(const Eigen::VectorXd& f) const {
  require_modes();
  const int n = mask_->interior_count();
  if (f.size() != n) throw ShapeError("sample vector length must equal the interior node count");
  const int reps = static_cast<int>(storage_.reps.size());
  const double h2 = h() * h();

  // F_c(q) = |Stab(q)|^{-1} sum_g f(g q) chi_c(g), accumulated from every
  // interior node of the orbit (each image appears |Stab| times in the group
  // sum and once among the nodes).
  std::vector<Eigen::VectorXd> folded(4);
  std::vector<bool> nonzero(4, false);
  for (int c = 0; c < 4; ++c) {
    if ((c & 1) && !storage_.symmetry.x) continue;
    if ((c & 2) && !storage_.symmetry.y) continue;
    Eigen::VectorXd fc = Eigen::VectorXd::Zero(reps);
    for (int idx = 0; idx < n; ++idx) {
      fc[storage_.rep_of[idx]] += ModeStorage::chi(c, storage_.element_of[idx]) * f[idx];
    }
    folded[c] = std::move(fc);
    nonzero[c] = (folded[c].array() != 0.0).any();
  }

  const int k = size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  const int sectors = static_cast<int>(storage_.sectors.size());
  std::vector<std::vector<int>> modes_of(sectors);
  for (int j = 0; j < k; ++j) modes_of[storage_.mode_slot[j].first].push_back(j);
  for (int a = 0; a < sectors; ++a) {
    for (int b = a; b < sectors; ++b) {
      const auto& sa = storage_.sectors[a];
      const auto& sb = storage_.sectors[b];
      const int c = sa.character ^ sb.character;
      if (!nonzero[c] || sa.values.cols() == 0 || sb.values.cols() == 0) continue;
      Eigen::MatrixXd block = h2 * (sa.values.transpose() * (folded[c].asDiagonal() * sb.values));
      for (int j : modes_of[a]) {
        for (int l : modes_of[b]) {
          const double v = block(storage_.mode_slot[j].second, storage_.mode_slot[l].second);
          out(j, l) = v;
          out(l, j) = v;
        }
      }
    }
  }
  return out;
}

namespace {
constexpr char kMagic[8] = {'S', 'D', 'L', 'B', 'A', 'S', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void SpectralBasis::save(const std::string& path, std::uint64_t scene_hash) const {
  require_modes();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write basis cache " + tmp);
    out.write(kMagic, sizeof kMagic);
    write_pod(out, h());
    write_pod(out, static_cast<std::int64_t>(size()));
    write_pod(out, scene_hash);
    write_pod(out, static_cast<std::int32_t>(mask_->nx()));
    write_pod(out, static_cast<std::int32_t>(mask_->ny()));
    write_pod(out, static_cast<std::int32_t>(mask_->interior_count()));
    write_pod(out, static_cast<std::uint8_t>(storage_.symmetry.x));
    write_pod(out, static_cast<std::uint8_t>(storage_.symmetry.y));
    write_pod(out, max_residual_);
    out.write(reinterpret_cast<const char*>(gamma_sq_.data()), sizeof(double) * gamma_sq_.size());
    for (const auto& [sector, col] : storage_.mode_slot) {
      write_pod(out, static_cast<std::int32_t>(sector));
      write_pod(out, static_cast<std::int32_t>(col));
    }
    write_pod(out, static_cast<std::int32_t>(storage_.sectors.size()));
    for (const auto& sec : storage_.sectors) {
      write_pod(out, static_cast<std::int32_t>(sec.character));
      write_pod(out, static_cast<std::int64_t>(sec.values.rows()));
      write_pod(out, static_cast<std::int64_t>(sec.values.cols()));
      out.write(reinterpret_cast<const char*>(sec.values.data()),
                static_cast<std::streamsize>(sizeof(double) * sec.values.size()));
    }
    if (!out) throw UsageError("failed writing basis cache " + tmp);
  }
  std::rename(tmp.c_str(), path.c_str());
}

std::shared_ptr<const SpectralBasis> SpectralBasis::load(const std::string& path,
                                                         std::shared_ptr<const GridMask> mask,
                                                         std::uint64_t scene_hash, int count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return nullptr;
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) return nullptr;
  const auto h = read_pod<double>(in);
  const auto k = read_pod<std::int64_t>(in);
  const auto hash = read_pod<std::uint64_t>(in);
  const auto nx = read_pod<std::int32_t>(in);
  const auto ny = read_pod<std::int32_t>(in);
  const auto interior = read_pod<std::int32_t>(in);
  MirrorSymmetry sym;
  sym.x = read_pod<std::uint8_t>(in) != 0;
  sym.y = read_pod<std::uint8_t>(in) != 0;
  const auto residual = read_pod<double>(in);
  if (!in || h != mask->h() || k != count || hash != scene_hash || nx != mask->nx() || ny != mask->ny() ||
      interior != mask->interior_count()) {
    return nullptr;
  }
  Eigen::VectorXd gamma_sq(k);
  in.read(reinterpret_cast<char*>(gamma_sq.data()), static_cast<std::streamsize>(sizeof(double) * k));
  ModeStorage st = make_skeleton(*mask, sym);
  for (std::int64_t j = 0; j < k; ++j) {
    const auto sector = read_pod<std::int32_t>(in);
    const auto col = read_pod<std::int32_t>(in);
    st.mode_slot.emplace_back(sector, col);
  }
  const auto sectors = read_pod<std::int32_t>(in);
  for (int s = 0; s < sectors; ++s) {
    ModeStorage::Sector sec;
    sec.character = read_pod<std::int32_t>(in);
    const auto rows = read_pod<std::int64_t>(in);
    const auto cols = read_pod<std::int64_t>(in);
    if (rows != static_cast<std::int64_t>(st.reps.size())) return nullptr;
    sec.values.resize(rows, cols);
    in.read(reinterpret_cast<char*>(sec.values.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
    st.sectors.push_back(std::move(sec));
  }
  if (!in) return nullptr;
  return std::make_shared<const SpectralBasis>(std::move(mask), std::move(gamma_sq), std::move(st), residual);
}

double residual_check(const SpectralBasis& basis, const StiffnessMatrix& stiffness) {
  double worst = 0.0;
  const double h = basis.h();
  for (int j = 0; j < basis.size(); ++j) {
    const Eigen::VectorXd e = basis.mode(j);
    const double g2 = basis.gamma_sq()[j];
    const double r = h * (stiffness.matrix * e - g2 * e).norm() / g2;
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace sdlab
