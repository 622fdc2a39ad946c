#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdlab/damped_operator.hpp"
#include "sdlab/error.hpp"
#include "sdlab/geometry.hpp"
#include "sdlab/laplacian.hpp"

namespace sdlab {

/// Which damping coefficient the pipeline uses: the collar profile of the
/// scene, or one of the diagnostic constants a = 0 and a = 1.
enum class DampingMode { Profile, Zero, One };

const char* to_string(DampingMode mode);

struct SweepParams {
  int samples = 200;
  double imag_part = 0.0;
};

struct EstimateParams {
  int energy_trials = 100;
  int lambdas = 20;
  int trials = 8;
  std::vector<double> lemma_s{0.0, 0.5, 1.0};
  std::vector<double> resso_s{-2.0, 0.0, 2.0};
  double eps = 0.5;
  int tau_samples = 40;
};

struct EvolveParams {
  double horizon = 20.0;
  double fit_t_min = 1.0;
  double record_dt = 0.25;
  /// "worst-case" (top right singular vector of the propagator at the
  /// horizon) or "random" (seeded complex Gaussian).
  std::string datum = "worst-case";
  std::vector<double> norm_s{0.0, 1.0};
  /// Relative tolerance between alpha_star and sigma0_star.
  double abscissa_tolerance = 0.1;
};

struct SmoothingParams {
  double horizon = 10.0;
  double s = 0.0;
  double eps = 0.5;
  int seeds = 10;
  int frequencies = 4;
  /// Time step as a fraction of the ceiling 0.1 / gamma_K^2.
  double dt_fraction = 1.0;
  double rough_s0 = 0.0;
  std::vector<double> profile_times{0.5, 1.0, 2.0};
  /// Allowed excess of the time-domain ratio over the frequency-domain bound.
  double quadrature_tolerance = 0.05;
};

struct CompareParams {
  /// Refinement-stable metrics must have ratio in [1/f, f].
  double stability_factor = 2.0;
  /// Spectral abscissae must agree within this fraction of the smaller one.
  double abscissa_spread = 0.5;
};

struct ExperimentConfig {
  std::string experiment;
  SceneConfig scene;
  int n = 32;
  int k = 400;
  std::optional<std::uint64_t> seed;
  bool refine = false;
  DampingMode damping = DampingMode::Profile;
  /// Basis cache directory; empty means <out>/cache.
  std::string cache_dir;
  SweepParams sweep;
  EstimateParams estimates;
  EvolveParams evolve;
  SmoothingParams smoothing;
  CompareParams compare;
};

const std::vector<std::string>& experiment_names();

/// Two unit discs at (+-2, 0) in [-8, 8]^2, eps0 = 1/2, c = 1, n = 32, K = 400.
ExperimentConfig preset(const std::string& name);

/// Applies an INI-style config on top of `base`. Unknown sections or keys,
/// malformed values and out-of-range numbers raise UsageError naming the
/// field path (for example "scene.eps0").
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

/// Range and consistency checks; throws UsageError with the field path.
void validate_config(const ExperimentConfig& config);

/// Canonical text of every field; parse_config(config_text(c)) reproduces c.
std::string config_text(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

/// One refinement level of the pipeline: mask, basis, damping and operator.
struct Level {
  int n = 0;
  int k = 0;
  std::shared_ptr<const GridMask> mask;
  std::shared_ptr<const SpectralBasis> basis;
  DampingProfile profile;
  std::shared_ptr<const DampedOperator> op;
  double basis_seconds = 0.0;
  double operator_seconds = 0.0;
  bool from_cache = false;
};

/// Rasterizes, loads or computes the basis (caching it under cache_dir when
/// non-empty) and assembles the damped operator.
Level build_level(const SceneConfig& scene, int n, int k, DampingMode damping, const std::string& cache_dir);

/// The same basis with a different damping coefficient.
Level with_damping(const Level& level, const SceneConfig& scene, DampingMode damping);

/// Stable metrics must keep their fine/coarse ratio in [1/tolerance, tolerance];
/// divergent ones (negative controls) must grow by at least tolerance;
/// recorded ones are reported but not compared.
enum class MetricKind { Stable, Divergent, Recorded };

const char* to_string(MetricKind kind);

struct Metric {
  std::string name;
  double value = 0.0;
  MetricKind kind = MetricKind::Stable;
  double tolerance = 2.0;
};

struct LevelSummary {
  int n = 0;
  int k = 0;
  std::vector<Metric> metrics;
};

struct Assertion {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunManifest {
  std::string experiment;
  std::string config_hash;
  std::string code_version;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> timings;
  std::vector<std::string> outputs;
  std::vector<LevelSummary> levels;
  std::vector<Assertion> assertions;

  bool passed() const;
};

std::string manifest_json(const RunManifest& manifest);
RunManifest parse_manifest(const std::string& json_text);

struct ComparisonRow {
  std::string metric;
  double coarse = 0.0;
  double fine = 0.0;
  double ratio = 0.0;
  double tolerance = 2.0;
  MetricKind kind = MetricKind::Stable;
  bool pass = false;
};

struct ComparisonReport {
  std::string experiment;
  std::vector<ComparisonRow> rows;
  bool passed() const;
};

/// Compares the finest level of each manifest metric by metric (fine / coarse).
/// Throws ComparisonError when the experiments or metric sets differ.
ComparisonReport compare_refinements(const RunManifest& coarse, const RunManifest& fine);
ComparisonReport compare_levels(const std::string& experiment, const LevelSummary& coarse, const LevelSummary& fine);
std::string comparison_json(const ComparisonReport& report);

/// Runs the configured experiment, writing every artifact into out_dir
/// (write-then-rename) together with manifest.json.
RunManifest run(const ExperimentConfig& config, const std::string& out_dir);

/// Exit status: 0 pass, 1 usage, 2 assertion failure, 3 numeric failure.
int exit_code(const RunManifest& manifest);
int exit_code(const Error& error);

/// Writes text to path via a temporary file and rename.
void write_atomic(const std::string& path, const std::string& text);

}  // namespace sdlab
