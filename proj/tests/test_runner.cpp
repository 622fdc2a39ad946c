#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdlab/error.hpp"
#include "sdlab/runner.hpp"
#include "support.hpp"

using namespace sdlab;
namespace fs = std::filesystem;

namespace {

const char* kSmallScene = R"(
[scene]
box = -5 -3 5 3
obstacles = -2 0 1; 2 0 1
eps0 = 0.5
amplitude = 1

[grid]
n = 4
K = 40

[sweep]
samples = 30
)";

ExperimentConfig small_config(const std::string& experiment) {
  ExperimentConfig c = parse_config(kSmallScene);
  c.experiment = experiment;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdlab_runner_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const Metric& metric(const LevelSummary& level, const std::string& name) {
  for (const auto& m : level.metrics) {
    if (m.name == name) return m;
  }
  throw std::runtime_error("missing metric " + name);
}

std::string usage_message(const std::string& text) {
  try {
    validate_config(parse_config(text, small_config("spectrum")));
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config errors name the field path") {
  CHECK(usage_message("[scene]\neps0 = -1\n").find("scene.eps0") != std::string::npos);
  CHECK(usage_message("[scene]\nradius = 2\n").find("scene.radius: unknown key") != std::string::npos);
  CHECK(usage_message("[grid]\nK = ten\n").find("grid.K") != std::string::npos);
  CHECK(usage_message("[grid]\nn = 1\n").find("grid.n") != std::string::npos);
  CHECK(usage_message("[scene]\nbox = 0 0 1\n").find("scene.box") != std::string::npos);
  CHECK(usage_message("[scene]\nobstacles = 0 0\n").find("scene.obstacles") != std::string::npos);
  CHECK(usage_message("[evolve]\ndatum = smooth\n").find("evolve.datum") != std::string::npos);
  CHECK(usage_message("experiment = dance\n").find("experiment") != std::string::npos);
  CHECK(usage_message("refine = maybe\n").find("refine") != std::string::npos);
  CHECK(usage_message("[grid]\nn = 8\n").empty());

  ExperimentConfig est = small_config("estimates");
  CHECK_THROWS_WITH_AS(validate_config(est), doctest::Contains("seed"), UsageError);
  est.seed = 3;
  CHECK_NOTHROW(validate_config(est));
  CHECK_THROWS_AS(preset("nope"), UsageError);
}

TEST_CASE("config text round trip") {
  ExperimentConfig c = preset("paper-two-disc");
  c.experiment = "smoothing";
  c.seed = 17;
  c.smoothing.profile_times = {0.25, 1.0 / 3.0};
  c.scene.eps0 = 0.1 + 0.2;
  const ExperimentConfig back = parse_config(config_text(c));
  CHECK(config_text(back) == config_text(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.scene.eps0 == c.scene.eps0);
  CHECK(back.smoothing.profile_times == c.smoothing.profile_times);
  c.seed = 18;
  CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("preset scene") {
  const ExperimentConfig c = preset("paper-two-disc");
  CHECK(c.n == 32);
  CHECK(c.k == 400);
  CHECK(c.scene.box.lower.x == -8.0);
  CHECK(c.scene.box.upper.y == 8.0);
  REQUIRE(c.scene.obstacles.size() == 2);
  CHECK(c.scene.obstacles[0].center.x == -2.0);
  CHECK(c.scene.obstacles[1].center.x == 2.0);
  CHECK(c.scene.eps0 == 0.5);
  CHECK(c.scene.amplitude == 1.0);
}

TEST_CASE("geometry check on the collinear scene fails with exit code 2") {
  ExperimentConfig c = parse_config(R"(
experiment = geometry-check
[scene]
box = -10 -10 10 10
obstacles = -4 0 1; 0 0 1; 4 0 1
)");
  const fs::path out = scratch("collinear");
  const RunManifest m = run(c, out.string());
  CHECK_FALSE(m.passed());
  CHECK(exit_code(m) == 2);
  CHECK(slurp(out / "geometry.json").find("\"all_ok\": false") != std::string::npos);
  const RunManifest ok = run(small_config("geometry-check"), scratch("two_disc").string());
  CHECK(ok.passed());
  CHECK(exit_code(ok) == 0);
}

TEST_CASE("spectrum without damping records sigma0 = 0") {
  ExperimentConfig c = small_config("spectrum");
  c.damping = DampingMode::Zero;
  const RunManifest m = run(c, scratch("zero").string());
  REQUIRE(m.levels.size() == 1);
  CHECK(std::abs(metric(m.levels[0], "sigma0_star").value) <= 1e-10);
  CHECK(m.passed());
}

TEST_CASE("refined sweep writes both levels and a comparison") {
  ExperimentConfig c = small_config("resolvent-sweep");
  c.refine = true;
  const fs::path out = scratch("sweep");
  const RunManifest m = run(c, out.string());
  REQUIRE(m.levels.size() == 2);
  CHECK(m.levels[1].n == 8);
  CHECK(m.levels[1].k == 80);
  CHECK(fs::exists(out / "sweep_n4_K40.csv"));
  CHECK(fs::exists(out / "sweep_n8_K80.csv"));
  CHECK(fs::exists(out / "comparison.json"));
  CHECK(slurp(out / "comparison.json").find("\"metric\": \"c_star\"") != std::string::npos);
  for (const auto& name : m.outputs) CHECK(fs::exists(out / name));
  for (const auto& entry : fs::directory_iterator(out)) {
    CHECK(entry.path().extension() != ".tmp");
    if (entry.is_regular_file()) {
      const std::string file = entry.path().filename().string();
      CHECK(std::find(m.outputs.begin(), m.outputs.end(), file) != m.outputs.end());
    }
  }

  const RunManifest back = parse_manifest(slurp(out / "manifest.json"));
  CHECK(back.experiment == "resolvent-sweep");
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.levels.size() == 2);

  // Identical manifests compare with every ratio equal to one.
  const ComparisonReport same = compare_refinements(back, back);
  CHECK_FALSE(same.rows.empty());
  for (const auto& r : same.rows) CHECK(r.ratio == 1.0);
  CHECK(same.passed());

  RunManifest other = back;
  other.experiment = "spectrum";
  CHECK_THROWS_AS(compare_refinements(back, other), ComparisonError);
  CHECK(exit_code(ComparisonError("x")) == 1);
}

TEST_CASE("identical config and seed give byte-identical CSV") {
  ExperimentConfig c = small_config("estimates");
  c.seed = 5;
  c.estimates.energy_trials = 10;
  c.estimates.lambdas = 4;
  c.estimates.trials = 2;
  c.estimates.tau_samples = 5;
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  const RunManifest ma = run(c, a.string());
  const RunManifest mb = run(c, b.string());
  CHECK(ma.outputs == mb.outputs);
  int compared = 0;
  for (const auto& name : ma.outputs) {
    if (fs::path(name).extension() != ".csv") continue;
    CHECK(slurp(a / name) == slurp(b / name));
    ++compared;
  }
  CHECK(compared >= 2);
}

TEST_CASE("comparison rules") {
  LevelSummary coarse{4, 40, {{"c", 1.0, MetricKind::Stable, 2.0}, {"d", 1.0, MetricKind::Divergent, 2.0},
                              {"r", 1.0, MetricKind::Recorded, 2.0}}};
  LevelSummary fine{8, 80, {{"c", 1.9, MetricKind::Stable, 2.0}, {"d", 1.5, MetricKind::Divergent, 2.0},
                            {"r", 9.0, MetricKind::Recorded, 2.0}}};
  const ComparisonReport r = compare_levels("x", coarse, fine);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].pass);
  CHECK_FALSE(r.rows[1].pass);
  fine.metrics[0].value = 0.4;
  fine.metrics[1].value = 2.5;
  const ComparisonReport s = compare_levels("x", coarse, fine);
  CHECK_FALSE(s.rows[0].pass);
  CHECK(s.rows[1].pass);
  fine.metrics.pop_back();
  CHECK_THROWS_AS(compare_levels("x", coarse, fine), ComparisonError);
}

TEST_CASE("numeric and scene errors map to exit codes") {
  CHECK(exit_code(UsageError("x")) == 1);
  CHECK(exit_code(InvalidSceneError("x")) == 1);
  CHECK(exit_code(NumericError("x", 1.0)) == 3);
  CHECK(exit_code(PoleProximityError("x", cplx(1, 0))) == 3);

  ExperimentConfig c = small_config("spectrum");
  c.scene.obstacles[0].center = {-0.5, 0};
  c.scene.obstacles[1].center = {0.5, 0};
  CHECK_THROWS_AS(run(c, scratch("overlap").string()), InvalidSceneError);
}

TEST_CASE("atomic writes leave no temporary file") {
  const fs::path dir = scratch("atomic");
  fs::create_directories(dir);
  write_atomic((dir / "a.txt").string(), "hello");
  CHECK(slurp(dir / "a.txt") == "hello");
  CHECK_FALSE(fs::exists(dir / "a.txt.tmp"));
  CHECK_THROWS_AS(write_atomic((dir / "missing" / "a.txt").string(), "x"), UsageError);
}
