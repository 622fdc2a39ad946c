#include "sdlab/resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "sdlab/error.hpp"

namespace sdlab {

namespace {

cplx nearest_eigenvalue(const DampedOperator& op, cplx tau) {
  const auto& values = op.eigen().values;
  cplx best = values[0];
  for (const cplx& v : values) {
    if (std::abs(v - tau) < std::abs(best - tau)) best = v;
  }
  return best;
}

Eigen::MatrixXcd shifted(const DampedOperator& op, cplx tau) {
  Eigen::MatrixXcd m = op.matrix();
  m.diagonal().array() -= tau;
  return m;
}

// Eigen's rcond estimate skips exactly zero pivots, so test those directly.
bool near_singular(const Eigen::PartialPivLU<Eigen::MatrixXcd>& lu) {
  const Eigen::VectorXd pivots = lu.matrixLU().diagonal().cwiseAbs();
  return !(lu.rcond() > 1e-14) || !(pivots.minCoeff() > 1e-14 * pivots.maxCoeff());
}

}  // namespace

double japanese(cplx tau) { return std::sqrt(1.0 + std::norm(tau)); }

ModeVector resolve(const DampedOperator& op, cplx tau, const ModeVector& f) {
  if (f.size() != op.size()) throw ShapeError("right-hand side length does not match K");
  const Eigen::MatrixXcd m = shifted(op, tau);
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
  if (near_singular(lu)) {
    throw PoleProximityError("tau is numerically an eigenvalue", nearest_eigenvalue(op, tau));
  }
  Eigen::VectorXcd u = lu.solve(f.coeffs);
  const double fn = f.coeffs.norm();
  const double res = (m * u - f.coeffs).norm();
  if (!(res <= 1e-8 * fn) && fn > 0.0) {
    u += lu.solve((f.coeffs - m * u).eval());
    const double res2 = (m * u - f.coeffs).norm();
    if (!(res2 <= 1e-8 * fn)) {
      throw PoleProximityError("resolvent solve failed its residual check", nearest_eigenvalue(op, tau));
    }
  }
  return {f.basis, std::move(u)};
}

double resnorm(const DampedOperator& op, cplx tau, double s_in, double s_out) {
  const SpectralBasis& b = *op.basis();
  const Eigen::VectorXd d_in = b.gamma_pow(s_in);
  const Eigen::VectorXd d_out_inv = b.gamma_pow(-s_out);
  const Eigen::MatrixXcd w = d_in.asDiagonal() * shifted(op, tau) * d_out_inv.asDiagonal();
  const Eigen::VectorXd sv = singular_values(w);
  const double smin = sv[sv.size() - 1];
  if (!(smin > 1e-14 * sv[0])) {
    throw PoleProximityError("resolvent norm requested at an eigenvalue", nearest_eigenvalue(op, tau));
  }
  return 1.0 / smin;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw DomainError("log grid needs 0 < lo <= hi and n >= 1");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo);
  const double step = (std::log(hi) - a) / (n - 1);
  for (int i = 0; i < n; ++i) out[i] = std::exp(a + step * i);
  out.back() = hi;
  return out;
}

SweepTable resolvent_sweep(const DampedOperator& op, double tau_min, double tau_max, int samples, double imag_part) {
  SweepTable t;
  t.tau_min = tau_min;
  t.tau_max = tau_max;
  for (double re : log_grid(tau_min, tau_max, samples)) {
    SweepRow row;
    row.tau = {re, imag_part};
    try {
      row.resnorm = resnorm(op, row.tau, 0.0, 0.0);
      const double jt = japanese(row.tau);
      const double l = std::log(jt);
      row.normalized = row.resnorm * std::sqrt(jt) / (l * l);
      if (std::isfinite(row.normalized)) t.c_star = std::max(t.c_star, row.normalized);
    } catch (const PoleProximityError&) {
      row.flagged = true;
      row.resnorm = std::numeric_limits<double>::infinity();
      row.normalized = std::numeric_limits<double>::infinity();
    }
    t.rows.push_back(row);
  }
  return t;
}

std::string sweep_csv(const SweepTable& table) {
  std::string out = "tau_re,tau_im,s_in,s_out,resnorm,normalized,flag\n";
  char line[256];
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.tau.real(), r.tau.imag(), r.s_in,
                  r.s_out, r.resnorm, r.normalized, r.flagged ? 1 : 0);
    out += line;
  }
  return out;
}

namespace {

void finish(EstimateReport& r) {
  r.max_ratio = 0.0;
  for (double v : r.ratios) r.max_ratio = std::max(r.max_ratio, v);
  if (!r.parameters.empty()) {
    r.param_min = *std::min_element(r.parameters.begin(), r.parameters.end());
    r.param_max = *std::max_element(r.parameters.begin(), r.parameters.end());
  }
}

}  // namespace

EstimateReport check_resso(const DampedOperator& op, double s, double eps, const std::vector<double>& taus) {
  if (!(eps > 0.0)) throw DomainError("eps must be positive");
  EstimateReport r;
  r.name = "resso";
  r.s = s;
  for (double tau : taus) {
    r.parameters.push_back(tau);
    r.ratios.push_back(resnorm(op, tau, s, s + 1.0 - eps));
  }
  r.trials = static_cast<int>(taus.size());
  finish(r);
  return r;
}

EstimateReport check_resalpha(const DampedOperator& op, const std::vector<double>& taus) {
  EstimateReport r;
  r.name = "resalpha";
  for (double tau : taus) {
    const double jt = japanese(tau);
    const double l = std::log(jt);
    r.parameters.push_back(tau);
    r.ratios.push_back(resnorm(op, tau, 0.0, 2.0) / (std::sqrt(jt) * l * l));
  }
  r.trials = static_cast<int>(taus.size());
  finish(r);
  return r;
}

Eigen::MatrixXcd semiclassical_solve(const DampedOperator& op, double lambda, const Eigen::MatrixXcd& v) {
  if (v.rows() != op.size()) throw ShapeError("right-hand side length does not match K");
  const cplx tau = lambda * lambda;
  const Eigen::MatrixXcd m = -shifted(op, tau);
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
  if (near_singular(lu)) {
    throw PoleProximityError("lambda^2 is numerically an eigenvalue", nearest_eigenvalue(op, tau));
  }
  return lu.solve(v);
}

double energy_identity_gap(const DampedOperator& op, double lambda, const ModeVector& v) {
  const Eigen::VectorXcd u = semiclassical_solve(op, lambda, v.coeffs);
  const Eigen::VectorXcd bu = op.damping().cast<cplx>() * u;
  // With <f, g> conjugate-linear in g: <v, u> = lambda^2|u|^2 - <Lambda u, u> - i<Bu, u>.
  return std::abs(inner(bu, u).real() + inner(v.coeffs, u).imag());
}

std::vector<EstimateReport> lemma_harness(const DampedOperator& op, const Eigen::VectorXd& psi,
                                          const Eigen::VectorXd& damping, const LemmaOptions& options) {
  const SpectralBasis& basis = *op.basis();
  const int k = op.size();
  if (options.trials < 1) throw DomainError("lemma harness needs at least one trial");
  const Eigen::MatrixXcd m_psi = mult_matrix(psi, basis).matrix;
  const Eigen::MatrixXcd m_a = mult_matrix(damping, basis).matrix;
  int band = k;
  if (options.band > 0.0) {
    band = 0;
    while (band < k && basis.gamma_sq()[band] <= options.band * options.band) ++band;
    band = std::max(band, 1);
  }

  std::vector<EstimateReport> reports;
  auto add = [&](const std::string& name, double s) -> EstimateReport& {
    EstimateReport r;
    r.name = name;
    r.s = s;
    reports.push_back(r);
    return reports.back();
  };
  for (double s : options.s_values) add("hs+1", s);
  for (double s : options.s_values) add("hs", s);
  add("cor1", 0.5);
  add("cor2", 0.5);
  add("estLog", 0.0);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  auto norm_s = [&](const Eigen::VectorXcd& c, double s) {
    return basis.gamma_pow(s).cwiseProduct(c.cwiseAbs()).norm();
  };
  for (double lambda : options.lambdas) {
    Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(k, options.trials);
    for (int t = 0; t < options.trials; ++t) {
      for (int j = 0; j < band; ++j) v(j, t) = cplx(normal(rng), normal(rng));
    }
    const Eigen::MatrixXcd u = semiclassical_solve(op, lambda, v);
    const Eigen::MatrixXcd pu = m_psi * u;
    const Eigen::MatrixXcd au = m_a * u;
    std::vector<double> worst(reports.size(), 0.0);
    for (int t = 0; t < options.trials; ++t) {
      const double nv = v.col(t).norm();
      const double nu = u.col(t).norm();
      const Eigen::VectorXcd p = pu.col(t);
      std::size_t idx = 0;
      for (double s : options.s_values) {
        const double lhs = norm_s(p, s + 1.0);
        const double rhs = lambda * norm_s(p, s) + nv + std::sqrt(lambda) * nu;
        worst[idx] = std::max(worst[idx], lhs / rhs);
        ++idx;
      }
      for (double s : options.s_values) {
        const double lhs = norm_s(p, s);
        const double rhs = norm_s(p, s + 1.0) / lambda + nv / lambda + nu / std::sqrt(lambda);
        worst[idx] = std::max(worst[idx], lhs / rhs);
        ++idx;
      }
      const double half = norm_s(p, 0.5);
      worst[idx] = std::max(worst[idx], norm_s(p, 0.0) / (half / std::sqrt(lambda) + nv / lambda + nu / std::sqrt(lambda)));
      ++idx;
      worst[idx] = std::max(worst[idx], norm_s(p, 1.0) / (std::sqrt(lambda) * half + nv / std::sqrt(lambda) + nu));
      ++idx;
      // log clipped at 1 so the weight stays positive below lambda = e.
      const double lg = std::max(1.0, std::log(lambda)) / lambda;
      const Eigen::VectorXcd a = au.col(t);
      worst[idx] = std::max(worst[idx], nu / (lg * nv + lg * norm_s(a, 1.0) + norm_s(a, 0.0)));
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
      reports[i].parameters.push_back(lambda);
      reports[i].ratios.push_back(worst[i]);
      reports[i].trials += options.trials;
    }
  }
  for (auto& r : reports) finish(r);
  return reports;
}

}  // namespace sdlab
