// Command-line entry point: one subcommand per experiment plus `compare`.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sdlab/runner.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sdlab::UsageError("cannot read '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void print_manifest(const sdlab::RunManifest& m, const std::string& out) {
  for (const auto& [stage, seconds] : m.timings) std::printf("  %-44s %9.2fs\n", stage.c_str(), seconds);
  for (const auto& a : m.assertions) {
    std::printf("%s  %s: %s\n", a.pass ? "PASS" : "FAIL", a.name.c_str(), a.detail.c_str());
  }
  std::printf("%s -> %s/manifest.json\n", m.passed() ? "passed" : "FAILED", out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strongly damped Schrodinger lab: damped generators on obstacle domains"};
  app.require_subcommand(1);

  struct Options {
    std::string config;
    std::string out = "out";
    std::string preset;
    bool refine = false;
    std::uint64_t seed = 0;
  };
  Options opt;
  std::vector<CLI::App*> experiments;
  for (const auto& name : sdlab::experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " experiment");
    sub->add_option("--config", opt.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_flag("--refine", opt.refine, "Also run at twice the resolution and mode count");
    sub->add_option("--seed", opt.seed, "Random seed for randomized harnesses");
    sub->add_option("--preset", opt.preset, "Named base configuration (paper-two-disc)");
    experiments.push_back(sub);
  }
  std::string coarse_path;
  std::string fine_path;
  std::string compare_out;
  CLI::App* compare = app.add_subcommand("compare", "Compare two run manifests metric by metric");
  compare->add_option("coarse", coarse_path, "Manifest of the coarse run")->required()->check(CLI::ExistingFile);
  compare->add_option("fine", fine_path, "Manifest of the fine run")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "Write the comparison JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (compare->parsed()) {
      const auto a = sdlab::parse_manifest(read_file(coarse_path));
      const auto b = sdlab::parse_manifest(read_file(fine_path));
      const auto report = sdlab::compare_refinements(a, b);
      const std::string text = sdlab::comparison_json(report);
      if (!compare_out.empty()) sdlab::write_atomic(compare_out, text);
      std::cout << text;
      return report.passed() ? 0 : 2;
    }
    for (CLI::App* sub : experiments) {
      if (!sub->parsed()) continue;
      sdlab::ExperimentConfig config;
      if (!opt.preset.empty()) config = sdlab::preset(opt.preset);
      if (!opt.config.empty()) config = sdlab::load_config(opt.config, config);
      config.experiment = sub->get_name();
      if (opt.refine) config.refine = true;
      if (sub->count("--seed") > 0) config.seed = opt.seed;
      const auto manifest = sdlab::run(config, opt.out);
      print_manifest(manifest, opt.out);
      return sdlab::exit_code(manifest);
    }
  } catch (const sdlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return sdlab::exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
