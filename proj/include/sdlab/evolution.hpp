#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "sdlab/calculus.hpp"
#include "sdlab/damped_operator.hpp"

namespace sdlab {

enum class PropagationMethod { Automatic, Eigendecomposition, MatrixExponential };

/// e^{itA} u0 for the generator u' = iAu. Automatic uses the eigendecomposition
/// unless its eigenvector matrix has condition number above 1e8.
ModeVector propagate(const DampedOperator& op, const ModeVector& u0, double t,
                     PropagationMethod method = PropagationMethod::Automatic);

/// The full propagator matrix e^{itA}.
Eigen::MatrixXcd propagator(const DampedOperator& op, double t,
                            PropagationMethod method = PropagationMethod::Automatic);

/// Max relative residual |(u(t+d) - u(t-d)) / 2d - iAu(t)| / (|A| |u(t)|) at the given times.
double propagation_residual(const DampedOperator& op, const ModeVector& u0, const std::vector<double>& times);

struct TrajectoryRecord {
  std::vector<double> times;
  /// K x times.size() coefficient snapshots.
  Eigen::MatrixXcd snapshots;
  std::vector<double> s_list;
  /// norms(k, m) = |u(t_k)|_{H^{s_list[m]}}.
  Eigen::MatrixXd norms;
};

TrajectoryRecord trajectory(const DampedOperator& op, const ModeVector& u0, const std::vector<double>& times,
                            const std::vector<double>& s_list);

/// f(t) = 1[t_on <= t < t_off] * sum_q e^{i mu_q t} g_q.
struct Forcing {
  std::vector<double> frequencies;
  /// K x Q spatial profiles g_q.
  Eigen::MatrixXcd profiles;
  double t_on = 0.0;
  double t_off = std::numeric_limits<double>::infinity();

  static Forcing none(int k);
  Eigen::VectorXcd at(double t) const;
  bool is_zero() const;
};

/// Random forcing with `count` frequencies drawn uniformly in [mu_lo, mu_hi]
/// and complex Gaussian profiles on modes with gamma_j^2 <= mode_cutoff.
Forcing band_limited_forcing(const SpectralBasis& basis, double mu_lo, double mu_hi, int count, double mode_cutoff,
                             std::uint64_t seed);

/// Inhomogeneous solution with u(0) = 0 by the exponential midpoint rule in
/// eigen-coordinates, exact for f constant on each step. Records every
/// `record_every` steps (the endpoint is always recorded).
TrajectoryRecord duhamel(const DampedOperator& op, const Forcing& f, double horizon, double dt,
                         const std::vector<double>& s_list, int record_every = 1);

struct DecayFit {
  double alpha_star = 0.0;
  double c_star = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  /// RMS deviation of log|u| from the fitted line.
  double residual = 0.0;
  int samples = 0;
  /// Samples below the round-off floor were dropped.
  bool truncated = false;
};

/// Least-squares fit of log|u(t)|_{L2} ~ log c - alpha t on [t_min, T].
DecayFit decay_fit(const TrajectoryRecord& traj, double t_min);

/// Unit datum maximizing |e^{iTA} u0|: top right singular vector of the propagator.
ModeVector worst_case_datum(const DampedOperator& op, double horizon);

/// |f|_{L2_T H^s}, |u|_{L2_T H^{s+1-eps}} and their ratio by the trapezoid rule.
struct SmoothingResult {
  double forcing_norm = 0.0;
  double solution_norm = 0.0;
  double ratio = 0.0;
};

SmoothingResult smoothing_ratio(const DampedOperator& op, const Forcing& f, double s, double eps, double horizon,
                                double dt);

struct SmoothnessTable {
  std::vector<double> times;
  std::vector<double> k_list;
  /// values(t, k) = |v(t)|_{H^k}.
  Eigen::MatrixXd values;
};

/// Coefficients a_j = gamma_j^{-s0-0.51}, normalized in H^{s0}.
ModeVector rough_datum(std::shared_ptr<const SpectralBasis> basis, double s0);

SmoothnessTable smoothness_profile(const DampedOperator& op, const ModeVector& v0, double s0,
                                   const std::vector<double>& times, const std::vector<double>& k_list);

std::string trajectory_csv(const TrajectoryRecord& traj);

}  // namespace sdlab
