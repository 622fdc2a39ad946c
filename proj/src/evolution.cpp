#include "sdlab/evolution.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sdlab/error.hpp"

namespace sdlab {

namespace {

constexpr double kConditionLimit = 1e8;

bool use_eigen(const DampedOperator& op, PropagationMethod method) {
  switch (method) {
    case PropagationMethod::Eigendecomposition: return true;
    case PropagationMethod::MatrixExponential: return false;
    case PropagationMethod::Automatic: return op.eigen().condition <= kConditionLimit;
  }
  return true;
}

Eigen::VectorXcd phases(const Eigen::VectorXcd& values, double t) {
  const cplx it(0.0, t);
  return (values * it).array().exp().matrix();
}

// (e^z - 1) / z without cancellation near zero.
cplx phi1(cplx z) {
  if (std::abs(z) < 1e-3) return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)));
  return (std::exp(z) - 1.0) / z;
}

Eigen::MatrixXd norms_of(const SpectralBasis& basis, const Eigen::MatrixXcd& snaps, const std::vector<double>& s_list) {
  Eigen::MatrixXd out(snaps.cols(), static_cast<Eigen::Index>(s_list.size()));
  for (std::size_t m = 0; m < s_list.size(); ++m) {
    const Eigen::VectorXd w = basis.gamma_pow(s_list[m]);
    for (Eigen::Index k = 0; k < snaps.cols(); ++k) {
      out(k, static_cast<Eigen::Index>(m)) = w.cwiseProduct(snaps.col(k).cwiseAbs()).norm();
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXcd propagator(const DampedOperator& op, double t, PropagationMethod method) {
  if (t < 0.0) throw DomainError("propagation time must be nonnegative");
  if (t == 0.0) return Eigen::MatrixXcd::Identity(op.size(), op.size());
  if (use_eigen(op, method)) {
    const Eigendecomposition& e = op.eigen();
    return e.vectors * phases(e.values, t).asDiagonal() * e.inverse;
  }
  const Eigen::MatrixXcd generator = op.matrix() * cplx(0.0, t);
  return generator.exp();
}

ModeVector propagate(const DampedOperator& op, const ModeVector& u0, double t, PropagationMethod method) {
  if (u0.size() != op.size()) throw ShapeError("initial datum length does not match K");
  if (t < 0.0) throw DomainError("propagation time must be nonnegative");
  if (t == 0.0) return u0;
  if (use_eigen(op, method)) {
    const Eigendecomposition& e = op.eigen();
    Eigen::VectorXcd w = e.inverse * u0.coeffs;
    w = phases(e.values, t).cwiseProduct(w);
    return {u0.basis, e.vectors * w};
  }
  return {u0.basis, propagator(op, t, method) * u0.coeffs};
}

double propagation_residual(const DampedOperator& op, const ModeVector& u0, const std::vector<double>& times) {
  const double a_norm = singular_values(op.matrix())[0];
  const double d = 1e-4 / a_norm;
  double worst = 0.0;
  for (double t : times) {
    const Eigen::VectorXcd u = propagate(op, u0, t).coeffs;
    Eigen::VectorXcd du;
    if (t >= d) {
      du = (propagate(op, u0, t + d).coeffs - propagate(op, u0, t - d).coeffs) / (2.0 * d);
    } else {
      // Second-order one-sided difference near t = 0.
      du = (-3.0 * u + 4.0 * propagate(op, u0, t + d).coeffs - propagate(op, u0, t + 2.0 * d).coeffs) / (2.0 * d);
    }
    const Eigen::VectorXcd rhs = cplx(0.0, 1.0) * (op.matrix() * u);
    const double scale = a_norm * u.norm();
    if (scale > 0.0) worst = std::max(worst, (du - rhs).norm() / scale);
  }
  return worst;
}

TrajectoryRecord trajectory(const DampedOperator& op, const ModeVector& u0, const std::vector<double>& times,
                            const std::vector<double>& s_list) {
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw DomainError("trajectory times must be strictly increasing");
  }
  TrajectoryRecord r;
  r.times = times;
  r.s_list = s_list;
  r.snapshots.resize(op.size(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t k = 0; k < times.size(); ++k) {
    r.snapshots.col(static_cast<Eigen::Index>(k)) = propagate(op, u0, times[k]).coeffs;
  }
  r.norms = norms_of(*op.basis(), r.snapshots, s_list);
  return r;
}

Forcing Forcing::none(int k) {
  Forcing f;
  f.profiles = Eigen::MatrixXcd::Zero(k, 0);
  return f;
}

Eigen::VectorXcd Forcing::at(double t) const {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(profiles.rows());
  if (t < t_on || t >= t_off) return out;
  for (std::size_t q = 0; q < frequencies.size(); ++q) {
    out += std::exp(cplx(0.0, frequencies[q] * t)) * profiles.col(static_cast<Eigen::Index>(q));
  }
  return out;
}

bool Forcing::is_zero() const { return frequencies.empty() || profiles.cwiseAbs().maxCoeff() == 0.0 || !(t_off > t_on); }

Forcing band_limited_forcing(const SpectralBasis& basis, double mu_lo, double mu_hi, int count, double mode_cutoff,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(mu_lo, mu_hi);
  std::normal_distribution<double> normal;
  Forcing f;
  f.profiles = Eigen::MatrixXcd::Zero(basis.size(), count);
  for (int q = 0; q < count; ++q) {
    f.frequencies.push_back(uniform(rng));
    for (int j = 0; j < basis.size() && basis.gamma_sq()[j] <= mode_cutoff; ++j) {
      f.profiles(j, q) = cplx(normal(rng), normal(rng));
    }
  }
  return f;
}

TrajectoryRecord duhamel(const DampedOperator& op, const Forcing& f, double horizon, double dt,
                         const std::vector<double>& s_list, int record_every) {
  const int k = op.size();
  if (f.profiles.rows() != k || static_cast<std::size_t>(f.profiles.cols()) != f.frequencies.size()) {
    throw ShapeError("forcing profiles must be K x (number of frequencies)");
  }
  if (!(horizon > 0.0) || !(dt > 0.0) || record_every < 1) throw DomainError("duhamel needs T > 0, dt > 0");
  const double limit = 0.1 / op.lambda()[k - 1];
  if (dt > limit * (1.0 + 1e-12)) {
    throw ResolutionError("dt = " + std::to_string(dt) + " exceeds 0.1 / gamma_K^2 = " + std::to_string(limit));
  }
  const long steps = static_cast<long>(std::ceil(horizon / dt - 1e-9));
  const double h = horizon / static_cast<double>(steps);

  // One-step maps: w -> E w + P g for the midpoint forcing value g.
  Eigen::MatrixXcd to_modal;
  Eigen::MatrixXcd from_modal;
  Eigen::VectorXcd e_diag;
  Eigen::VectorXcd p_diag;
  Eigen::MatrixXcd e_full;
  Eigen::MatrixXcd p_full;
  const bool diagonal = op.eigen().condition <= kConditionLimit;
  if (diagonal) {
    const Eigendecomposition& e = op.eigen();
    to_modal = e.inverse;
    from_modal = e.vectors;
    e_diag.resize(k);
    p_diag.resize(k);
    for (int j = 0; j < k; ++j) {
      const cplx z = cplx(0.0, h) * e.values[j];
      e_diag[j] = std::exp(z);
      p_diag[j] = h * phi1(z);
    }
  } else {
    // exp([[iAh, hI], [0, 0]]) carries e^{iAh} and h*phi1(iAh) in its first block row.
    Eigen::MatrixXcd aug = Eigen::MatrixXcd::Zero(2 * k, 2 * k);
    aug.topLeftCorner(k, k) = op.matrix() * cplx(0.0, h);
    aug.topRightCorner(k, k) = Eigen::MatrixXcd::Identity(k, k) * h;
    const Eigen::MatrixXcd ex = aug.exp();
    e_full = ex.topLeftCorner(k, k);
    p_full = ex.topRightCorner(k, k);
    to_modal = Eigen::MatrixXcd::Identity(k, k);
    from_modal = Eigen::MatrixXcd::Identity(k, k);
  }
  const Eigen::MatrixXcd g_modal = to_modal * f.profiles;

  std::vector<double> times{0.0};
  std::vector<Eigen::VectorXcd> snaps{Eigen::VectorXcd::Zero(k)};
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(k);
  Eigen::VectorXcd g(k);
  for (long n = 0; n < steps; ++n) {
    const double mid = (static_cast<double>(n) + 0.5) * h;
    g.setZero();
    if (mid >= f.t_on && mid < f.t_off) {
      for (std::size_t q = 0; q < f.frequencies.size(); ++q) {
        g += std::exp(cplx(0.0, f.frequencies[q] * mid)) * g_modal.col(static_cast<Eigen::Index>(q));
      }
    }
    if (diagonal) {
      w = e_diag.cwiseProduct(w) + p_diag.cwiseProduct(g);
    } else {
      w = e_full * w + p_full * g;
    }
    if ((n + 1) % record_every == 0 || n + 1 == steps) {
      times.push_back(static_cast<double>(n + 1) * h);
      snaps.push_back(w);
    }
  }
  TrajectoryRecord r;
  r.times = std::move(times);
  r.s_list = s_list;
  Eigen::MatrixXcd modal(k, static_cast<Eigen::Index>(snaps.size()));
  for (std::size_t i = 0; i < snaps.size(); ++i) modal.col(static_cast<Eigen::Index>(i)) = snaps[i];
  r.snapshots.noalias() = from_modal * modal;
  r.norms = norms_of(*op.basis(), r.snapshots, s_list);
  return r;
}

DecayFit decay_fit(const TrajectoryRecord& traj, double t_min) {
  if (t_min < 1.0) throw DomainError("decay fits start at t_min >= 1");
  std::vector<double> ts;
  std::vector<double> ys;
  double peak = 0.0;
  for (Eigen::Index k = 0; k < traj.snapshots.cols(); ++k) peak = std::max(peak, traj.snapshots.col(k).norm());
  DecayFit fit;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] < t_min) continue;
    const double n = traj.snapshots.col(static_cast<Eigen::Index>(k)).norm();
    if (!(n > 1e-13 * peak)) {
      fit.truncated = true;
      break;
    }
    ts.push_back(traj.times[k]);
    ys.push_back(std::log(n));
  }
  if (ts.size() < 2) throw DomainError("decay fit needs at least two samples above the round-off floor");
  const double n = static_cast<double>(ts.size());
  double tm = 0.0;
  double ym = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tm += ts[i];
    ym += ys[i];
  }
  tm /= n;
  ym /= n;
  double stt = 0.0;
  double sty = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - tm) * (ts[i] - tm);
    sty += (ts[i] - tm) * (ys[i] - ym);
  }
  const double slope = sty / stt;
  const double intercept = ym - slope * tm;
  double ss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double d = ys[i] - (intercept + slope * ts[i]);
    ss += d * d;
  }
  fit.alpha_star = -slope;
  fit.c_star = std::exp(intercept);
  fit.t_min = ts.front();
  fit.t_max = ts.back();
  fit.residual = std::sqrt(ss / n);
  fit.samples = static_cast<int>(ts.size());
  if (fit.truncated) {
    std::fprintf(stderr, "warning: decay fit window truncated at t = %.6g (round-off floor)\n", fit.t_max);
  }
  return fit;
}

ModeVector worst_case_datum(const DampedOperator& op, double horizon) {
  const Eigen::MatrixXcd u = propagator(op, horizon);
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(u, Eigen::ComputeThinV);
  Eigen::VectorXcd v = svd.matrixV().col(0);
  // Fix the free phase: largest coefficient real positive.
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  v *= std::conj(v[arg]) / std::abs(v[arg]);
  return {op.basis(), v};
}

SmoothingResult smoothing_ratio(const DampedOperator& op, const Forcing& f, double s, double eps, double horizon,
                                double dt) {
  SmoothingResult r;
  if (f.is_zero()) return r;
  const double s_out = s + 1.0 - eps;
  const TrajectoryRecord traj = duhamel(op, f, horizon, dt, {s_out}, 1);
  const Eigen::VectorXd w = op.basis()->gamma_pow(s);
  double fu = 0.0;
  double ff = 0.0;
  for (std::size_t k = 0; k + 1 < traj.times.size(); ++k) {
    const double t0 = traj.times[k];
    const double t1 = traj.times[k + 1];
    const double u0 = traj.norms(static_cast<Eigen::Index>(k), 0);
    const double u1 = traj.norms(static_cast<Eigen::Index>(k + 1), 0);
    const double f0 = w.cwiseProduct(f.at(t0).cwiseAbs()).norm();
    const double f1 = w.cwiseProduct(f.at(t1).cwiseAbs()).norm();
    fu += 0.5 * (t1 - t0) * (u0 * u0 + u1 * u1);
    ff += 0.5 * (t1 - t0) * (f0 * f0 + f1 * f1);
  }
  r.forcing_norm = std::sqrt(ff);
  r.solution_norm = std::sqrt(fu);
  r.ratio = r.forcing_norm > 0.0 ? r.solution_norm / r.forcing_norm : 0.0;
  return r;
}

ModeVector rough_datum(std::shared_ptr<const SpectralBasis> basis, double s0) {
  Eigen::VectorXcd c = basis->gamma_pow(-s0 - 0.51).cast<cplx>();
  ModeVector v(basis, c);
  v.coeffs /= hs_norm(v, s0);
  return v;
}

SmoothnessTable smoothness_profile(const DampedOperator& op, const ModeVector& v0, double s0,
                                   const std::vector<double>& times, const std::vector<double>& k_list) {
  if (std::abs(hs_norm(v0, s0) - 1.0) > 1e-10) throw DomainError("initial datum must be normalized in H^{s0}");
  SmoothnessTable t;
  t.times = times;
  t.k_list = k_list;
  t.values.resize(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(k_list.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const ModeVector v = propagate(op, v0, times[i]);
    for (std::size_t m = 0; m < k_list.size(); ++m) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = hs_norm(v, k_list[m]);
    }
  }
  return t;
}

std::string trajectory_csv(const TrajectoryRecord& traj) {
  std::string out = "t";
  char buf[64];
  for (double s : traj.s_list) {
    std::snprintf(buf, sizeof buf, ",norm_H%.17g", s);
    out += buf;
  }
  out += "\n";
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.times[k]);
    out += buf;
    for (std::size_t m = 0; m < traj.s_list.size(); ++m) {
      std::snprintf(buf, sizeof buf, ",%.17g", traj.norms(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace sdlab
