#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sdlab/calculus.hpp"
#include "sdlab/damped_operator.hpp"

namespace sdlab {

/// <tau> = (1 + |tau|^2)^{1/2}.
double japanese(cplx tau);

/// Solves (A - tau) u = f by pivoted LU with a residual gate of 1e-8 |f|.
ModeVector resolve(const DampedOperator& op, cplx tau, const ModeVector& f);

/// ||D_out (A - tau)^{-1} D_in^{-1}||_2, computed as 1 / sigma_min(D_in (A - tau) D_out^{-1}).
double resnorm(const DampedOperator& op, cplx tau, double s_in, double s_out);

struct SweepRow {
  cplx tau;
  double s_in = 0.0;
  double s_out = 0.0;
  double resnorm = 0.0;
  /// resnorm * <tau>^{1/2} / log^2 <tau>.
  double normalized = 0.0;
  /// Row hit a pole; resnorm is +inf.
  bool flagged = false;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  double tau_min = 0.0;
  double tau_max = 0.0;
  /// Largest finite normalized value.
  double c_star = 0.0;
};

/// n log-spaced points on [lo, hi].
std::vector<double> log_grid(double lo, double hi, int n);

SweepTable resolvent_sweep(const DampedOperator& op, double tau_min, double tau_max, int samples,
                          double imag_part = 0.0);
std::string sweep_csv(const SweepTable& table);

struct EstimateReport {
  std::string name;
  double s = 0.0;
  /// Sample parameter (tau or lambda) and the largest ratio seen there.
  std::vector<double> parameters;
  std::vector<double> ratios;
  double max_ratio = 0.0;
  int trials = 0;
  double param_min = 0.0;
  double param_max = 0.0;
};

/// max over the grid of the H^s -> H^{s+1-eps} resolvent norm.
EstimateReport check_resso(const DampedOperator& op, double s, double eps, const std::vector<double>& taus);

/// max over the grid of ||(A - tau)^{-1}||_{L2 -> H^2} / (<tau>^{1/2} log^2 <tau>).
EstimateReport check_resalpha(const DampedOperator& op, const std::vector<double>& taus);

/// Solves (lambda^2 - Lambda - iB) u = v and returns |<Bu, u> + Im <v, u>|.
double energy_identity_gap(const DampedOperator& op, double lambda, const ModeVector& v);

/// Solution of (lambda^2 - Lambda - iB) u = v for several right-hand sides.
Eigen::MatrixXcd semiclassical_solve(const DampedOperator& op, double lambda, const Eigen::MatrixXcd& v);

struct LemmaOptions {
  std::vector<double> lambdas;
  std::vector<double> s_values{0.0, 0.5, 1.0};
  /// Random right-hand sides per lambda.
  int trials = 8;
  /// v is supported on modes with gamma_j <= band.
  double band = 0.0;
  std::uint64_t seed = 1;
};

/// Ratios LHS / RHS (implied constant 1) of the localized H^s estimates for
/// solutions of the semiclassical system, with psi the cutoff samples and a
/// the damping samples. Reports are named hs+1, hs, cor1, cor2 and estLog.
std::vector<EstimateReport> lemma_harness(const DampedOperator& op, const Eigen::VectorXd& psi,
                                          const Eigen::VectorXd& damping, const LemmaOptions& options);

}  // namespace sdlab
