#include "sdlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "sdlab/calculus.hpp"
#include "sdlab/evolution.hpp"
#include "sdlab/resolvent.hpp"

#ifndef SDLAB_VERSION
#define SDLAB_VERSION "0.0.0"
#endif

namespace sdlab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string level_tag(const Level& level) {
  return "n" + std::to_string(level.n) + "_K" + std::to_string(level.k);
}

std::string series(const std::vector<double>& x, const std::vector<double>& y) {
  std::string out;
  for (std::size_t i = 0; i < x.size(); ++i) out += fmt(x[i]) + " " + fmt(y[i]) + "\n";
  return out;
}

std::string metric_name(const std::string& base, double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_s%g", base.c_str(), s);
  return buf;
}

/// Shared state of one run: output directory, manifest under construction.
struct Context {
  const ExperimentConfig& config;
  fs::path out;
  RunManifest& manifest;
  std::string stage = "setup";

  void write(const std::string& name, const std::string& text) {
    write_atomic((out / name).string(), text);
    manifest.outputs.push_back(name);
  }
  void time(const std::string& stage, double seconds) { manifest.timings.emplace_back(stage, seconds); }
  void check(const std::string& name, bool pass, const std::string& detail) {
    manifest.assertions.push_back({name, pass, detail});
  }
  std::string cache_dir() const { return config.cache_dir.empty() ? (out / "cache").string() : config.cache_dir; }
  std::uint64_t seed() const { return config.seed.value_or(0); }
};

std::vector<std::pair<int, int>> refinement_levels(const ExperimentConfig& c) {
  std::vector<std::pair<int, int>> levels{{c.n, c.k}};
  if (c.refine) levels.emplace_back(2 * c.n, 2 * c.k);
  return levels;
}

std::vector<Level> build_levels(Context& ctx, DampingMode damping) {
  std::vector<Level> levels;
  for (const auto& [n, k] : refinement_levels(ctx.config)) {
    ctx.stage = "basis n" + std::to_string(n) + "_K" + std::to_string(k);
    levels.push_back(build_level(ctx.config.scene, n, k, damping, ctx.cache_dir()));
    const Level& l = levels.back();
    ctx.time("basis " + level_tag(l) + (l.from_cache ? " (cached)" : ""), l.basis_seconds);
    ctx.time("operator " + level_tag(l), l.operator_seconds);
  }
  return levels;
}

double gamma_min(const Level& l) { return std::sqrt(l.basis->gamma_sq()[0]); }
double gamma_max(const Level& l) { return std::sqrt(l.basis->gamma_sq()[l.k - 1]); }

std::vector<double> sweep_window(const Level& l, int samples) {
  return log_grid(l.basis->gamma_sq()[0], l.basis->gamma_sq()[l.k - 1] / 4.0, samples);
}

// ---------------------------------------------------------------------------

void run_geometry(Context& ctx) {
  const SceneConfig& scene = ctx.config.scene;
  Stopwatch clock;
  validate_scene(scene);
  const IkawaReport ikawa = validate_ikawa(scene);
  json j;
  j["scene_hash"] = hash_hex(scene_hash(scene));
  j["obstacles"] = ikawa.count;
  j["kappa"] = ikawa.kappa;
  j["min_gap"] = std::isfinite(ikawa.min_gap) ? json(ikawa.min_gap) : json(nullptr);
  j["kappa_l_ok"] = ikawa.kappa_l_ok;
  json hulls = json::array();
  for (const auto& h : ikawa.hull_clearances) hulls.push_back({{"i", h.i}, {"j", h.j}, {"k", h.k}, {"clearance", h.clearance}});
  j["hull_clearances"] = hulls;
  j["all_ok"] = ikawa.all_ok;
  ctx.check("ikawa", ikawa.all_ok, ikawa.all_ok ? "all conditions hold" : "an Ikawa condition fails");

  if (scene.obstacles.size() >= 2) {
    const Segment seg = trapped_segment(scene);
    const OrbitCheck orbit = verify_uncontrolled_orbit(scene);
    j["trapped_segment"] = {seg.a.x, seg.a.y, seg.b.x, seg.b.y};
    j["uncontrolled"] = orbit.uncontrolled;
    j["orbit_margin"] = orbit.margin;
    ctx.check("uncontrolled_orbit", orbit.uncontrolled, "collar margin " + short_fmt(orbit.margin));
  } else {
    j["uncontrolled"] = false;
    ctx.check("uncontrolled_orbit", false, "a trapped orbit needs two obstacles");
  }
  const GridMask mask = rasterize(scene, ctx.config.n);
  j["n"] = ctx.config.n;
  j["interior_nodes"] = mask.interior_count();
  ctx.time("geometry", clock.seconds());
  ctx.write("geometry.json", j.dump(2) + "\n");
  ctx.manifest.levels.push_back({ctx.config.n, 0, {{"interior_nodes", static_cast<double>(mask.interior_count()),
                                                   MetricKind::Recorded, 1.0}}});
}

void run_spectrum(Context& ctx) {
  const auto levels = build_levels(ctx, ctx.config.damping);
  for (const Level& l : levels) {
    ctx.stage = ctx.config.experiment + " " + level_tag(l);
    Stopwatch clock;
    const SpectrumReport r = spectrum(*l.op);
    ctx.time("spectrum " + level_tag(l), clock.seconds());
    ctx.write("spectrum_" + level_tag(l) + ".csv", spectrum_csv(r));
    ctx.write("spectrum_" + level_tag(l) + ".json", spectrum_json(r, scene_hash(ctx.config.scene)));
    LevelSummary s{l.n, l.k, {}};
    s.metrics.push_back({"sigma0_star", r.sigma0_star, MetricKind::Stable, 1.0 + ctx.config.compare.abscissa_spread});
    s.metrics.push_back({"eigenvector_condition", r.eigenvector_condition, MetricKind::Recorded, 1.0});
    ctx.manifest.levels.push_back(std::move(s));
    ctx.check("no eigenvalue below the real axis " + level_tag(l), r.negative_count == 0,
              std::to_string(r.negative_count) + " eigenvalues with Im < -1e-10");
    if (ctx.config.damping == DampingMode::Zero) {
      ctx.check("undamped spectrum is real " + level_tag(l), std::abs(r.sigma0_star) <= 1e-10,
                "sigma0_star = " + short_fmt(r.sigma0_star));
    } else {
      ctx.check("spectral abscissa positive " + level_tag(l), r.sigma0_star > 0.0,
                "sigma0_star = " + short_fmt(r.sigma0_star));
    }
  }
}

void run_sweep(Context& ctx) {
  const auto levels = build_levels(ctx, ctx.config.damping);
  for (const Level& l : levels) {
    ctx.stage = ctx.config.experiment + " " + level_tag(l);
    Stopwatch clock;
    const std::vector<double> window = sweep_window(l, ctx.config.sweep.samples);
    const SweepTable table = resolvent_sweep(*l.op, window.front(), window.back(), ctx.config.sweep.samples,
                                            ctx.config.sweep.imag_part);
    ctx.time("resolvent sweep " + level_tag(l), clock.seconds());
    int flagged = 0;
    double c_hf = 0.0;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const SweepRow& row : table.rows) {
      if (row.flagged) {
        ++flagged;
        continue;
      }
      if (std::log(japanese(row.tau)) >= 1.0) c_hf = std::max(c_hf, row.normalized);
      xs.push_back(row.tau.real());
      ys.push_back(row.normalized);
    }
    Stopwatch clock2;
    const EstimateReport smoothing = check_resso(*l.op, 0.0, 0.5, window);
    ctx.time("H^0 -> H^1/2 sweep " + level_tag(l), clock2.seconds());

    ctx.write("sweep_" + level_tag(l) + ".csv", sweep_csv(table));
    SweepTable half;
    half.tau_min = window.front();
    half.tau_max = window.back();
    for (std::size_t i = 0; i < window.size(); ++i) {
      SweepRow row;
      row.tau = window[i];
      row.s_in = 0.0;
      row.s_out = 0.5;
      row.resnorm = smoothing.ratios[i];
      row.normalized = std::numeric_limits<double>::quiet_NaN();
      half.rows.push_back(row);
    }
    ctx.write("sweep_half_" + level_tag(l) + ".csv", sweep_csv(half));
    ctx.write("sweep_normalized_" + level_tag(l) + ".dat", series(xs, ys));
    json j;
    j["c_star"] = table.c_star;
    j["c_star_high_frequency"] = c_hf;
    j["resso_max"] = smoothing.max_ratio;
    j["tau_min"] = table.tau_min;
    j["tau_max"] = table.tau_max;
    j["samples"] = ctx.config.sweep.samples;
    j["flagged_rows"] = flagged;
    j["n"] = l.n;
    j["K"] = l.k;
    ctx.write("sweep_" + level_tag(l) + ".json", j.dump(2) + "\n");

    LevelSummary s{l.n, l.k, {}};
    const double f = ctx.config.compare.stability_factor;
    s.metrics.push_back({"c_star", table.c_star, MetricKind::Stable, f});
    s.metrics.push_back({"c_star_high_frequency", c_hf, MetricKind::Stable, f});
    s.metrics.push_back({"resso_max_s0_eps0.5", smoothing.max_ratio, MetricKind::Stable, f});
    ctx.manifest.levels.push_back(std::move(s));
    ctx.check("finite C* " + level_tag(l), flagged == 0 && std::isfinite(table.c_star) && table.c_star > 0.0,
              "C* = " + short_fmt(table.c_star) + ", flagged rows " + std::to_string(flagged));
    ctx.check("finite H^0 -> H^1/2 bound " + level_tag(l), std::isfinite(smoothing.max_ratio),
              "max = " + short_fmt(smoothing.max_ratio));
  }
}

double energy_trials(const DampedOperator& op, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const int k = op.size();
  const double lo = std::sqrt(op.lambda()[0]);
  const double hi = 0.5 * std::sqrt(op.lambda()[k - 1]);
  std::uniform_real_distribution<double> uniform(lo, std::max(lo, hi));
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double lambda = uniform(rng);
    Eigen::VectorXcd v(k);
    for (int j = 0; j < k; ++j) v[j] = cplx(normal(rng), normal(rng));
    v /= v.norm();
    const ModeVector mv(op.basis(), v);
    const Eigen::VectorXcd u = semiclassical_solve(op, lambda, v);
    worst = std::max(worst, energy_identity_gap(op, lambda, mv) / (v.norm() * u.norm()));
  }
  return worst;
}

void run_estimates(Context& ctx) {
  const auto levels = build_levels(ctx, ctx.config.damping);
  const EstimateParams& p = ctx.config.estimates;
  const double f = ctx.config.compare.stability_factor;
  // A common lambda grid and forcing band, fixed by the coarse level.
  const Level& coarse = levels.front();
  LemmaOptions lemma;
  lemma.lambdas = log_grid(gamma_min(coarse), 0.5 * gamma_max(coarse), p.lambdas);
  lemma.s_values = p.lemma_s;
  lemma.trials = p.trials;
  lemma.band = 0.5 * gamma_max(coarse);
  lemma.seed = ctx.seed();

  for (const Level& l : levels) {
    ctx.stage = ctx.config.experiment + " " + level_tag(l);
    LevelSummary s{l.n, l.k, {}};
    json j;
    j["n"] = l.n;
    j["K"] = l.k;

    Stopwatch clock;
    const double gap = energy_trials(*l.op, p.energy_trials, ctx.seed());
    ctx.time("energy identity " + level_tag(l), clock.seconds());
    j["energy_identity_gap"] = gap;
    s.metrics.push_back({"energy_identity_gap", gap, MetricKind::Recorded, 1.0});
    ctx.check("energy identity " + level_tag(l), gap <= 1e-10, "max scaled gap " + short_fmt(gap));

    Stopwatch clock2;
    const Eigen::VectorXd psi = interior_cutoff(ctx.config.scene, *l.mask);
    const auto reports = lemma_harness(*l.op, psi, l.profile.samples, lemma);
    ctx.time("lemma harness " + level_tag(l), clock2.seconds());
    std::string csv = "estimate,s,lambda,ratio\n";
    json lj = json::array();
    for (const auto& r : reports) {
      for (std::size_t i = 0; i < r.parameters.size(); ++i) {
        csv += r.name + "," + fmt(r.s) + "," + fmt(r.parameters[i]) + "," + fmt(r.ratios[i]) + "\n";
      }
      lj.push_back({{"name", r.name}, {"s", r.s}, {"max_ratio", r.max_ratio}, {"trials", r.trials}});
      s.metrics.push_back({metric_name(r.name, r.s), r.max_ratio, MetricKind::Stable, f});
      ctx.check("finite " + metric_name(r.name, r.s) + " " + level_tag(l),
                std::isfinite(r.max_ratio) && r.max_ratio > 0.0, "max ratio " + short_fmt(r.max_ratio));
    }
    j["lemma"] = lj;
    ctx.write("lemma_" + level_tag(l) + ".csv", csv);

    Stopwatch clock3;
    const std::vector<double> taus = sweep_window(l, p.tau_samples);
    json rj = json::array();
    std::string rcsv = "estimate,s,tau,ratio\n";
    std::vector<EstimateReport> resolvent_reports;
    for (double sv : p.resso_s) resolvent_reports.push_back(check_resso(*l.op, sv, p.eps, taus));
    resolvent_reports.push_back(check_resalpha(*l.op, taus));
    ctx.time("resolvent estimates " + level_tag(l), clock3.seconds());
    for (const auto& r : resolvent_reports) {
      for (std::size_t i = 0; i < r.parameters.size(); ++i) {
        rcsv += r.name + "," + fmt(r.s) + "," + fmt(r.parameters[i]) + "," + fmt(r.ratios[i]) + "\n";
      }
      const std::string name = r.name == "resso" ? metric_name("resso", r.s) : r.name;
      rj.push_back({{"name", name}, {"max_ratio", r.max_ratio}});
      s.metrics.push_back({name, r.max_ratio, MetricKind::Stable, f});
      ctx.check("finite " + name + " " + level_tag(l), std::isfinite(r.max_ratio),
                "max ratio " + short_fmt(r.max_ratio));
    }
    j["resolvent"] = rj;
    ctx.write("resolvent_estimates_" + level_tag(l) + ".csv", rcsv);
    ctx.write("estimates_" + level_tag(l) + ".json", j.dump(2) + "\n");
    ctx.manifest.levels.push_back(std::move(s));
  }
}

ModeVector random_datum(const std::shared_ptr<const SpectralBasis>& basis, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXcd v(basis->size());
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = cplx(normal(rng), normal(rng));
  return {basis, v / v.norm()};
}

std::vector<double> uniform_times(double horizon, double step) {
  const long count = static_cast<long>(std::floor(horizon / step + 1e-9));
  std::vector<double> times;
  for (long i = 0; i <= count; ++i) times.push_back(static_cast<double>(i) * step);
  if (horizon - times.back() > 1e-9 * horizon) times.push_back(horizon);
  return times;
}

json fit_json(const DecayFit& fit) {
  return {{"alpha_star", fit.alpha_star}, {"c_star", fit.c_star},   {"t_min", fit.t_min},
          {"t_max", fit.t_max},           {"residual", fit.residual}, {"samples", fit.samples},
          {"truncated", fit.truncated}};
}

void run_evolve(Context& ctx) {
  const auto levels = build_levels(ctx, ctx.config.damping);
  const EvolveParams& p = ctx.config.evolve;
  const double f = ctx.config.compare.stability_factor;
  const std::vector<double> times = uniform_times(p.horizon, p.record_dt);
  for (const Level& l : levels) {
    ctx.stage = ctx.config.experiment + " " + level_tag(l);
    Stopwatch clock;
    const SpectrumReport sr = spectrum(*l.op);
    const ModeVector u0 = p.datum == "random" ? random_datum(l.basis, ctx.seed()) : worst_case_datum(*l.op, p.horizon);
    const TrajectoryRecord traj = trajectory(*l.op, u0, times, p.norm_s);
    const DecayFit fit = decay_fit(traj, p.fit_t_min);
    ctx.time("evolution " + level_tag(l), clock.seconds());

    Stopwatch clock2;
    const Level undamped = with_damping(l, ctx.config.scene, DampingMode::Zero);
    const ModeVector v0 = p.datum == "random" ? random_datum(l.basis, ctx.seed()) : u0;
    const TrajectoryRecord control = trajectory(*undamped.op, v0, times, p.norm_s);
    const DecayFit control_fit = decay_fit(control, p.fit_t_min);
    ctx.time("undamped control " + level_tag(l), clock2.seconds());

    ctx.write("trajectory_" + level_tag(l) + ".csv", trajectory_csv(traj));
    ctx.write("trajectory_undamped_" + level_tag(l) + ".csv", trajectory_csv(control));
    std::vector<double> logs;
    for (Eigen::Index i = 0; i < traj.norms.rows(); ++i) logs.push_back(std::log(traj.snapshots.col(i).norm()));
    ctx.write("decay_" + level_tag(l) + ".dat", series(traj.times, logs));
    json j;
    j["n"] = l.n;
    j["K"] = l.k;
    j["datum"] = p.datum;
    j["fit"] = fit_json(fit);
    j["sigma0_star"] = sr.sigma0_star;
    j["undamped_fit"] = fit_json(control_fit);
    ctx.write("decay_" + level_tag(l) + ".json", j.dump(2) + "\n");

    LevelSummary s{l.n, l.k, {}};
    s.metrics.push_back({"alpha_star", fit.alpha_star, MetricKind::Stable, f});
    s.metrics.push_back({"sigma0_star", sr.sigma0_star, MetricKind::Stable, 1.0 + ctx.config.compare.abscissa_spread});
    s.metrics.push_back({"undamped_alpha_star", control_fit.alpha_star, MetricKind::Recorded, 1.0});
    ctx.manifest.levels.push_back(std::move(s));

    const double rel = std::abs(fit.alpha_star - sr.sigma0_star) / std::abs(sr.sigma0_star);
    ctx.check("positive decay rate " + level_tag(l), fit.alpha_star > 0.0, "alpha_star = " + short_fmt(fit.alpha_star));
    ctx.check("decay rate matches spectral abscissa " + level_tag(l), rel <= p.abscissa_tolerance,
              "alpha_star = " + short_fmt(fit.alpha_star) + ", sigma0_star = " + short_fmt(sr.sigma0_star) +
                  ", relative difference " + short_fmt(rel));
    ctx.check("undamped control does not decay " + level_tag(l), std::abs(control_fit.alpha_star) <= 1e-8,
              "alpha_star = " + short_fmt(control_fit.alpha_star));
  }
}

void run_smoothing(Context& ctx) {
  const auto levels = build_levels(ctx, ctx.config.damping);
  const SmoothingParams& p = ctx.config.smoothing;
  const double f = ctx.config.compare.stability_factor;
  // One forcing class for every level: frequencies and modes inside the coarse window.
  const Level& coarse = levels.front();
  const double mu_lo = coarse.basis->gamma_sq()[0];
  const double mu_hi = coarse.basis->gamma_sq()[coarse.k - 1] / 4.0;
  std::vector<double> k_list{p.rough_s0, p.rough_s0 + 1.0};

  for (const Level& l : levels) {
    ctx.stage = ctx.config.experiment + " " + level_tag(l);
    LevelSummary s{l.n, l.k, {}};
    json j;
    j["n"] = l.n;
    j["K"] = l.k;
    const double dt = p.dt_fraction * 0.1 / l.basis->gamma_sq()[l.k - 1];

    Stopwatch clock;
    std::string csv = "seed,forcing_norm,solution_norm,ratio,frequency_bound\n";
    double worst_ratio = 0.0;
    double worst_excess = -std::numeric_limits<double>::infinity();
    const std::vector<double> grid = sweep_window(l, ctx.config.sweep.samples);
    const double grid_bound = check_resso(*l.op, p.s, p.eps, grid).max_ratio;
    for (int i = 0; i < p.seeds; ++i) {
      const std::uint64_t seed = ctx.seed() + static_cast<std::uint64_t>(i);
      const Forcing forcing = band_limited_forcing(*l.basis, mu_lo, mu_hi, p.frequencies, mu_hi, seed);
      const SmoothingResult r = smoothing_ratio(*l.op, forcing, p.s, p.eps, p.horizon, dt);
      const double bound = std::max(grid_bound, check_resso(*l.op, p.s, p.eps, forcing.frequencies).max_ratio);
      worst_ratio = std::max(worst_ratio, r.ratio);
      worst_excess = std::max(worst_excess, r.ratio / bound - 1.0);
      csv += std::to_string(seed) + "," + fmt(r.forcing_norm) + "," + fmt(r.solution_norm) + "," + fmt(r.ratio) +
             "," + fmt(bound) + "\n";
    }
    ctx.time("smoothing ratios " + level_tag(l), clock.seconds());
    ctx.write("smoothing_" + level_tag(l) + ".csv", csv);

    Stopwatch clock2;
    const ModeVector v0 = rough_datum(l.basis, p.rough_s0);
    const SmoothnessTable damped = smoothness_profile(*l.op, v0, p.rough_s0, p.profile_times, k_list);
    const Level undamped = with_damping(l, ctx.config.scene, DampingMode::Zero);
    const SmoothnessTable control = smoothness_profile(*undamped.op, v0, p.rough_s0, p.profile_times, k_list);
    ctx.time("smoothness profiles " + level_tag(l), clock2.seconds());
    std::string pcsv = "operator,t,k,norm\n";
    for (std::size_t ti = 0; ti < p.profile_times.size(); ++ti) {
      for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
        pcsv += "damped," + fmt(p.profile_times[ti]) + "," + fmt(k_list[ki]) + "," +
                fmt(damped.values(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(ki))) + "\n";
      }
    }
    for (std::size_t ti = 0; ti < p.profile_times.size(); ++ti) {
      for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
        pcsv += "undamped," + fmt(p.profile_times[ti]) + "," + fmt(k_list[ki]) + "," +
                fmt(control.values(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(ki))) + "\n";
      }
    }
    ctx.write("smoothness_" + level_tag(l) + ".csv", pcsv);

    // The t closest to 1 carries the controls.
    std::size_t t1 = 0;
    for (std::size_t ti = 0; ti < p.profile_times.size(); ++ti) {
      if (std::abs(p.profile_times[ti] - 1.0) < std::abs(p.profile_times[t1] - 1.0)) t1 = ti;
    }
    const double damped_norm = damped.values(static_cast<Eigen::Index>(t1), 1);
    const double undamped_norm = control.values(static_cast<Eigen::Index>(t1), 1);

    j["dt"] = dt;
    j["horizon"] = p.horizon;
    j["max_ratio"] = worst_ratio;
    j["frequency_grid_bound"] = grid_bound;
    j["max_excess_over_bound"] = worst_excess;
    j["rough_norm_damped"] = damped_norm;
    j["rough_norm_undamped"] = undamped_norm;
    ctx.write("smoothing_" + level_tag(l) + ".json", j.dump(2) + "\n");

    s.metrics.push_back({"smoothing_ratio_max", worst_ratio, MetricKind::Stable, f});
    s.metrics.push_back({"rough_norm_damped", damped_norm, MetricKind::Stable, f});
    s.metrics.push_back({"rough_norm_undamped", undamped_norm, MetricKind::Divergent, f});
    s.metrics.push_back({"excess_over_frequency_bound", worst_excess, MetricKind::Recorded, 1.0});
    ctx.manifest.levels.push_back(std::move(s));
    ctx.check("frequency-domain bound dominates " + level_tag(l), worst_excess <= p.quadrature_tolerance,
              "largest ratio / bound - 1 = " + short_fmt(worst_excess));
  }
}

}  // namespace

Level build_level(const SceneConfig& scene, int n, int k, DampingMode damping, const std::string& cache_dir) {
  Level l;
  l.n = n;
  l.k = k;
  Stopwatch clock;
  l.mask = std::make_shared<const GridMask>(rasterize(scene, n));
  const std::uint64_t hash = scene_hash(scene);
  std::string path;
  if (!cache_dir.empty()) {
    fs::create_directories(cache_dir);
    path = (fs::path(cache_dir) / ("basis-" + hash_hex(hash) + "-n" + std::to_string(n) + "-K" + std::to_string(k) +
                                   ".bin"))
               .string();
    l.basis = SpectralBasis::load(path, l.mask, hash, k);
    l.from_cache = l.basis != nullptr;
  }
  if (!l.basis) {
    l.basis = eigenbasis(assemble_stiffness(l.mask), k);
    if (!path.empty()) l.basis->save(path, hash);
  }
  if (!(l.basis->max_residual() <= 1e-8)) {
    throw NumericError("eigenbasis residual gate failed at " + std::to_string(n) + " nodes per unit",
                       l.basis->max_residual());
  }
  l.basis_seconds = clock.seconds();
  return with_damping(l, scene, damping);
}

Level with_damping(const Level& level, const SceneConfig& scene, DampingMode damping) {
  Level l = level;
  Stopwatch clock;
  switch (damping) {
    case DampingMode::Profile:
      l.profile = damping_profile(scene, *l.mask);
      break;
    case DampingMode::Zero:
      l.profile = constant_profile(*l.mask, 0.0);
      break;
    case DampingMode::One:
      l.profile = constant_profile(*l.mask, 1.0);
      break;
  }
  l.op = assemble_operator(l.profile, l.basis);
  l.operator_seconds = clock.seconds();
  return l;
}

const char* to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::Stable:
      return "stable";
    case MetricKind::Divergent:
      return "divergent";
    case MetricKind::Recorded:
      return "recorded";
  }
  return "recorded";
}

bool RunManifest::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

bool ComparisonReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.pass; });
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["experiment"] = m.experiment;
  j["config_hash"] = m.config_hash;
  j["code_version"] = m.code_version;
  j["seed"] = m.seed;
  json t = json::array();
  for (const auto& [stage, seconds] : m.timings) t.push_back({{"stage", stage}, {"seconds", seconds}});
  j["timings"] = t;
  j["outputs"] = m.outputs;
  json levels = json::array();
  for (const auto& l : m.levels) {
    json metrics = json::array();
    for (const auto& x : l.metrics) {
      metrics.push_back({{"name", x.name}, {"value", x.value}, {"kind", to_string(x.kind)}, {"tolerance", x.tolerance}});
    }
    levels.push_back({{"n", l.n}, {"K", l.k}, {"metrics", metrics}});
  }
  j["levels"] = levels;
  json a = json::array();
  for (const auto& x : m.assertions) a.push_back({{"name", x.name}, {"pass", x.pass}, {"detail", x.detail}});
  j["assertions"] = a;
  j["passed"] = m.passed();
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.experiment = j.at("experiment").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("timings")) m.timings.emplace_back(t.at("stage"), t.at("seconds"));
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    for (const auto& l : j.at("levels")) {
      LevelSummary s;
      s.n = l.at("n");
      s.k = l.at("K");
      for (const auto& x : l.at("metrics")) {
        Metric metric;
        metric.name = x.at("name");
        metric.value = x.at("value").is_null() ? std::numeric_limits<double>::quiet_NaN() : x.at("value").get<double>();
        const std::string kind = x.at("kind");
        metric.kind = kind == "stable" ? MetricKind::Stable
                                       : kind == "divergent" ? MetricKind::Divergent : MetricKind::Recorded;
        metric.tolerance = x.at("tolerance");
        s.metrics.push_back(metric);
      }
      m.levels.push_back(std::move(s));
    }
    for (const auto& x : j.at("assertions")) m.assertions.push_back({x.at("name"), x.at("pass"), x.at("detail")});
  } catch (const json::exception& e) {
    throw UsageError(std::string("manifest: ") + e.what());
  }
  return m;
}

ComparisonReport compare_levels(const std::string& experiment, const LevelSummary& coarse, const LevelSummary& fine) {
  ComparisonReport report;
  report.experiment = experiment;
  if (coarse.metrics.size() != fine.metrics.size()) throw ComparisonError("the manifests record different metrics");
  for (std::size_t i = 0; i < coarse.metrics.size(); ++i) {
    const Metric& a = coarse.metrics[i];
    const Metric& b = fine.metrics[i];
    if (a.name != b.name) throw ComparisonError("metric '" + a.name + "' has no counterpart");
    if (a.kind == MetricKind::Recorded) continue;
    ComparisonRow row;
    row.metric = a.name;
    row.coarse = a.value;
    row.fine = b.value;
    row.kind = a.kind;
    row.tolerance = a.tolerance;
    row.ratio = a.value == b.value ? 1.0 : b.value / a.value;
    if (a.kind == MetricKind::Stable) {
      row.pass = std::isfinite(row.ratio) && row.ratio > 0.0 && row.ratio <= a.tolerance && row.ratio >= 1.0 / a.tolerance;
    } else {
      row.pass = std::isfinite(row.ratio) && row.ratio >= a.tolerance;
    }
    report.rows.push_back(row);
  }
  return report;
}

ComparisonReport compare_refinements(const RunManifest& coarse, const RunManifest& fine) {
  if (coarse.experiment != fine.experiment) {
    throw ComparisonError("cannot compare a " + coarse.experiment + " run with a " + fine.experiment + " run");
  }
  if (coarse.levels.empty() || fine.levels.empty()) throw ComparisonError("a manifest records no levels");
  return compare_levels(coarse.experiment, coarse.levels.back(), fine.levels.back());
}

std::string comparison_json(const ComparisonReport& report) {
  json j;
  j["experiment"] = report.experiment;
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"metric", r.metric},
                    {"coarse", r.coarse},
                    {"fine", r.fine},
                    {"ratio", r.ratio},
                    {"kind", to_string(r.kind)},
                    {"tolerance", r.tolerance},
                    {"pass", r.pass}});
  }
  j["rows"] = rows;
  j["passed"] = report.passed();
  return j.dump(2) + "\n";
}

RunManifest run(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  validate_scene(config.scene);
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.experiment = config.experiment;
  manifest.config_hash = hash_hex(config_hash(config));
  manifest.code_version = SDLAB_VERSION;
  manifest.seed = config.seed.value_or(0);
  Context ctx{config, fs::path(out_dir), manifest};
  ctx.write("config.ini", config_text(config));

  Stopwatch total;
  try {
    if (config.experiment == "geometry-check") {
      run_geometry(ctx);
    } else if (config.experiment == "spectrum") {
      run_spectrum(ctx);
    } else if (config.experiment == "resolvent-sweep") {
      run_sweep(ctx);
    } else if (config.experiment == "estimates") {
      run_estimates(ctx);
    } else if (config.experiment == "evolve") {
      run_evolve(ctx);
    } else if (config.experiment == "smoothing") {
      run_smoothing(ctx);
    }
  } catch (const NumericError& e) {
    throw NumericError(ctx.stage + ": " + e.what(), e.residual());
  } catch (const PoleProximityError& e) {
    throw PoleProximityError(ctx.stage + ": " + e.what(), e.nearest_eigenvalue());
  } catch (const Error& e) {
    throw Error(e.kind(), ctx.stage + ": " + e.what());
  }
  if (manifest.levels.size() == 2) {
    const ComparisonReport cmp = compare_levels(config.experiment, manifest.levels[0], manifest.levels[1]);
    ctx.write("comparison.json", comparison_json(cmp));
    for (const auto& r : cmp.rows) {
      ctx.check("refinement " + r.metric, r.pass,
                "fine / coarse = " + short_fmt(r.ratio) + " (" + to_string(r.kind) + ", tolerance " +
                    short_fmt(r.tolerance) + ")");
    }
  }
  ctx.time("total", total.seconds());
  manifest.outputs.push_back("manifest.json");
  write_atomic((fs::path(out_dir) / "manifest.json").string(), manifest_json(manifest));
  return manifest;
}

int exit_code(const RunManifest& manifest) { return manifest.passed() ? 0 : 2; }

int exit_code(const Error& error) {
  switch (error.kind()) {
    case ErrorKind::Usage:
    case ErrorKind::InvalidScene:
    case ErrorKind::UnsupportedConfiguration:
    case ErrorKind::Comparison:
      return 1;
    default:
      return 3;
  }
}

void write_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw UsageError("failed writing " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw UsageError("cannot rename " + tmp + ": " + ec.message());
  }
}

}  // namespace sdlab
