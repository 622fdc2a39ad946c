#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sdlab/runner.hpp"

namespace sdlab {

namespace {

using boost::property_tree::ptree;

std::string fmt(double v) {
  char buf[40];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  return std::string(buf, end);
}

std::string fmt_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw UsageError(path + ": expected a number, got '" + t + "'");
  }
  if (used != t.size() || !std::isfinite(v)) throw UsageError(path + ": expected a finite number, got '" + t + "'");
  return v;
}

long long parse_int(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &used);
  } catch (const std::exception&) {
    throw UsageError(path + ": expected an integer, got '" + t + "'");
  }
  if (used != t.size()) throw UsageError(path + ": expected an integer, got '" + t + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  unsigned long long v = 0;
  if (t.empty() || t[0] == '-') throw UsageError(path + ": expected an unsigned integer, got '" + t + "'");
  try {
    v = std::stoull(t, &used);
  } catch (const std::exception&) {
    throw UsageError(path + ": expected an unsigned integer, got '" + t + "'");
  }
  if (used != t.size()) throw UsageError(path + ": expected an unsigned integer, got '" + t + "'");
  return v;
}

bool parse_bool(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw UsageError(path + ": expected true or false, got '" + t + "'");
}

std::vector<double> parse_list(const std::string& path, const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (trim(item).empty()) throw UsageError(path + ": empty list entry");
    out.push_back(parse_double(path, item));
  }
  if (out.empty()) throw UsageError(path + ": expected a comma-separated list of numbers");
  return out;
}

std::vector<double> parse_numbers(const std::string& path, const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(parse_double(path, tok));
  return out;
}

BoxDomain parse_box(const std::string& path, const std::string& text) {
  const std::vector<double> v = parse_numbers(path, text);
  if (v.size() != 4) throw UsageError(path + ": expected 'x0 y0 x1 y1'");
  return {{v[0], v[1]}, {v[2], v[3]}};
}

std::vector<Disc> parse_obstacles(const std::string& path, const std::string& text) {
  std::vector<Disc> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ';')) {
    if (trim(item).empty()) continue;
    const std::vector<double> v = parse_numbers(path, item);
    if (v.size() != 3) throw UsageError(path + ": each obstacle is 'x y r', got '" + trim(item) + "'");
    out.push_back({{v[0], v[1]}, v[2]});
  }
  return out;
}

DampingMode parse_damping(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  if (t == "profile") return DampingMode::Profile;
  if (t == "zero") return DampingMode::Zero;
  if (t == "one") return DampingMode::One;
  throw UsageError(path + ": expected profile, zero or one, got '" + t + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

template <typename T, typename Parse>
Setter set(T ExperimentConfig::*field, Parse parse) {
  return [field, parse](ExperimentConfig& c, const std::string& path, const std::string& v) {
    c.*field = static_cast<T>(parse(path, v));
  };
}

template <typename Group, typename T, typename Parse>
Setter set(Group ExperimentConfig::*group, T Group::*field, Parse parse) {
  return [group, field, parse](ExperimentConfig& c, const std::string& path, const std::string& v) {
    (c.*group).*field = static_cast<T>(parse(path, v));
  };
}

auto as_string = [](const std::string&, const std::string& v) { return trim(v); };

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["experiment"] = set(&ExperimentConfig::experiment, as_string);
    t["seed"] = [](ExperimentConfig& c, const std::string& p, const std::string& v) { c.seed = parse_u64(p, v); };
    t["refine"] = set(&ExperimentConfig::refine, parse_bool);
    t["damping"] = set(&ExperimentConfig::damping, parse_damping);
    t["cache_dir"] = set(&ExperimentConfig::cache_dir, as_string);
    t["scene.box"] = [](ExperimentConfig& c, const std::string& p, const std::string& v) {
      c.scene.box = parse_box(p, v);
    };
    t["scene.obstacles"] = [](ExperimentConfig& c, const std::string& p, const std::string& v) {
      c.scene.obstacles = parse_obstacles(p, v);
    };
    t["scene.eps0"] = [](ExperimentConfig& c, const std::string& p, const std::string& v) {
      c.scene.eps0 = parse_double(p, v);
    };
    t["scene.amplitude"] = [](ExperimentConfig& c, const std::string& p, const std::string& v) {
      c.scene.amplitude = parse_double(p, v);
    };
    t["grid.n"] = set(&ExperimentConfig::n, parse_int);
    t["grid.K"] = set(&ExperimentConfig::k, parse_int);
    t["sweep.samples"] = set(&ExperimentConfig::sweep, &SweepParams::samples, parse_int);
    t["sweep.imag_part"] = set(&ExperimentConfig::sweep, &SweepParams::imag_part, parse_double);
    t["estimates.energy_trials"] = set(&ExperimentConfig::estimates, &EstimateParams::energy_trials, parse_int);
    t["estimates.lambdas"] = set(&ExperimentConfig::estimates, &EstimateParams::lambdas, parse_int);
    t["estimates.trials"] = set(&ExperimentConfig::estimates, &EstimateParams::trials, parse_int);
    t["estimates.lemma_s"] = set(&ExperimentConfig::estimates, &EstimateParams::lemma_s, parse_list);
    t["estimates.resso_s"] = set(&ExperimentConfig::estimates, &EstimateParams::resso_s, parse_list);
    t["estimates.eps"] = set(&ExperimentConfig::estimates, &EstimateParams::eps, parse_double);
    t["estimates.tau_samples"] = set(&ExperimentConfig::estimates, &EstimateParams::tau_samples, parse_int);
    t["evolve.horizon"] = set(&ExperimentConfig::evolve, &EvolveParams::horizon, parse_double);
    t["evolve.fit_t_min"] = set(&ExperimentConfig::evolve, &EvolveParams::fit_t_min, parse_double);
    t["evolve.record_dt"] = set(&ExperimentConfig::evolve, &EvolveParams::record_dt, parse_double);
    t["evolve.datum"] = set(&ExperimentConfig::evolve, &EvolveParams::datum, as_string);
    t["evolve.norm_s"] = set(&ExperimentConfig::evolve, &EvolveParams::norm_s, parse_list);
    t["evolve.abscissa_tolerance"] =
        set(&ExperimentConfig::evolve, &EvolveParams::abscissa_tolerance, parse_double);
    t["smoothing.horizon"] = set(&ExperimentConfig::smoothing, &SmoothingParams::horizon, parse_double);
    t["smoothing.s"] = set(&ExperimentConfig::smoothing, &SmoothingParams::s, parse_double);
    t["smoothing.eps"] = set(&ExperimentConfig::smoothing, &SmoothingParams::eps, parse_double);
    t["smoothing.seeds"] = set(&ExperimentConfig::smoothing, &SmoothingParams::seeds, parse_int);
    t["smoothing.frequencies"] = set(&ExperimentConfig::smoothing, &SmoothingParams::frequencies, parse_int);
    t["smoothing.dt_fraction"] = set(&ExperimentConfig::smoothing, &SmoothingParams::dt_fraction, parse_double);
    t["smoothing.rough_s0"] = set(&ExperimentConfig::smoothing, &SmoothingParams::rough_s0, parse_double);
    t["smoothing.profile_times"] =
        set(&ExperimentConfig::smoothing, &SmoothingParams::profile_times, parse_list);
    t["smoothing.quadrature_tolerance"] =
        set(&ExperimentConfig::smoothing, &SmoothingParams::quadrature_tolerance, parse_double);
    t["compare.stability_factor"] =
        set(&ExperimentConfig::compare, &CompareParams::stability_factor, parse_double);
    t["compare.abscissa_spread"] = set(&ExperimentConfig::compare, &CompareParams::abscissa_spread, parse_double);
    return t;
  }();
  return table;
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw UsageError(path + ": " + what);
}

}  // namespace

const char* to_string(DampingMode mode) {
  switch (mode) {
    case DampingMode::Profile:
      return "profile";
    case DampingMode::Zero:
      return "zero";
    case DampingMode::One:
      return "one";
  }
  return "profile";
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"geometry-check", "spectrum", "resolvent-sweep",
                                              "estimates",      "evolve",   "smoothing"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  if (name != "paper-two-disc") throw UsageError("preset: unknown preset '" + name + "'");
  ExperimentConfig c;
  c.scene.box = {{-8.0, -8.0}, {8.0, 8.0}};
  c.scene.obstacles = {{{-2.0, 0.0}, 1.0}, {{2.0, 0.0}, 1.0}};
  c.scene.eps0 = 0.5;
  c.scene.amplitude = 1.0;
  c.n = 32;
  c.k = 400;
  return c;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  const auto& table = setters();
  auto apply = [&](const std::string& path, const std::string& value) {
    const auto it = table.find(path);
    if (it == table.end()) throw UsageError(path + ": unknown key");
    it->second(base, path, value);
  };
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      apply(key, node.data());
      continue;
    }
    for (const auto& [sub, leaf] : node) {
      if (!leaf.empty()) throw UsageError(key + "." + sub + ": nested tables are not supported");
      apply(key + "." + sub, leaf.data());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot read '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::move(base));
}

void validate_config(const ExperimentConfig& c) {
  bool known = false;
  for (const auto& name : experiment_names()) known = known || name == c.experiment;
  require(known, "experiment", "unknown experiment '" + c.experiment + "'");
  require(c.n >= 2 && c.n <= 512, "grid.n", "must lie in [2, 512]");
  require(c.k >= 1 && c.k <= 5000, "grid.K", "must lie in [1, 5000]");
  require(c.scene.eps0 > 0.0, "scene.eps0", "must be positive");
  require(c.scene.amplitude >= 0.0, "scene.amplitude", "must be non-negative");
  require(c.scene.box.width() > 0.0 && c.scene.box.height() > 0.0, "scene.box", "must have positive extent");
  for (std::size_t i = 0; i < c.scene.obstacles.size(); ++i) {
    require(c.scene.obstacles[i].radius > 0.0, "scene.obstacles[" + std::to_string(i) + "]",
            "radius must be positive");
  }
  require(c.sweep.samples >= 2 && c.sweep.samples <= 100000, "sweep.samples", "must lie in [2, 100000]");
  const auto& e = c.estimates;
  require(e.energy_trials >= 1, "estimates.energy_trials", "must be at least 1");
  require(e.lambdas >= 2, "estimates.lambdas", "must be at least 2");
  require(e.trials >= 1, "estimates.trials", "must be at least 1");
  require(e.eps >= 0.0 && e.eps <= 1.0, "estimates.eps", "must lie in [0, 1]");
  require(e.tau_samples >= 2, "estimates.tau_samples", "must be at least 2");
  const auto& v = c.evolve;
  require(v.horizon > 0.0, "evolve.horizon", "must be positive");
  require(v.fit_t_min >= 1.0 && v.fit_t_min < v.horizon, "evolve.fit_t_min", "must lie in [1, horizon)");
  require(v.record_dt > 0.0 && v.record_dt <= v.horizon, "evolve.record_dt", "must lie in (0, horizon]");
  require(v.datum == "worst-case" || v.datum == "random", "evolve.datum", "must be worst-case or random");
  require(v.abscissa_tolerance > 0.0, "evolve.abscissa_tolerance", "must be positive");
  const auto& s = c.smoothing;
  require(s.horizon > 0.0, "smoothing.horizon", "must be positive");
  require(s.eps >= 0.0 && s.eps <= 1.0, "smoothing.eps", "must lie in [0, 1]");
  require(s.seeds >= 1, "smoothing.seeds", "must be at least 1");
  require(s.frequencies >= 1, "smoothing.frequencies", "must be at least 1");
  require(s.dt_fraction > 0.0 && s.dt_fraction <= 1.0, "smoothing.dt_fraction", "must lie in (0, 1]");
  require(s.quadrature_tolerance >= 0.0, "smoothing.quadrature_tolerance", "must be non-negative");
  for (double t : s.profile_times) require(t > 0.0, "smoothing.profile_times", "times must be positive");
  require(c.compare.stability_factor >= 1.0, "compare.stability_factor", "must be at least 1");
  require(c.compare.abscissa_spread >= 0.0, "compare.abscissa_spread", "must be non-negative");
  const bool randomized = c.experiment == "estimates" || c.experiment == "smoothing" ||
                          (c.experiment == "evolve" && v.datum == "random");
  require(!randomized || c.seed.has_value(), "seed", "required for the " + c.experiment + " experiment");
}

std::string config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "experiment = " << c.experiment << "\n";
  if (c.seed) os << "seed = " << *c.seed << "\n";
  os << "refine = " << (c.refine ? "true" : "false") << "\n";
  os << "damping = " << to_string(c.damping) << "\n";
  if (!c.cache_dir.empty()) os << "cache_dir = " << c.cache_dir << "\n";
  os << "\n[scene]\n";
  os << "box = " << fmt(c.scene.box.lower.x) << " " << fmt(c.scene.box.lower.y) << " " << fmt(c.scene.box.upper.x)
     << " " << fmt(c.scene.box.upper.y) << "\n";
  os << "obstacles = ";
  for (std::size_t i = 0; i < c.scene.obstacles.size(); ++i) {
    const Disc& d = c.scene.obstacles[i];
    os << (i ? "; " : "") << fmt(d.center.x) << " " << fmt(d.center.y) << " " << fmt(d.radius);
  }
  os << "\neps0 = " << fmt(c.scene.eps0) << "\namplitude = " << fmt(c.scene.amplitude) << "\n";
  os << "\n[grid]\nn = " << c.n << "\nK = " << c.k << "\n";
  os << "\n[sweep]\nsamples = " << c.sweep.samples << "\nimag_part = " << fmt(c.sweep.imag_part) << "\n";
  const auto& e = c.estimates;
  os << "\n[estimates]\nenergy_trials = " << e.energy_trials << "\nlambdas = " << e.lambdas
     << "\ntrials = " << e.trials << "\nlemma_s = " << fmt_list(e.lemma_s) << "\nresso_s = " << fmt_list(e.resso_s)
     << "\neps = " << fmt(e.eps) << "\ntau_samples = " << e.tau_samples << "\n";
  const auto& v = c.evolve;
  os << "\n[evolve]\nhorizon = " << fmt(v.horizon) << "\nfit_t_min = " << fmt(v.fit_t_min)
     << "\nrecord_dt = " << fmt(v.record_dt) << "\ndatum = " << v.datum << "\nnorm_s = " << fmt_list(v.norm_s)
     << "\nabscissa_tolerance = " << fmt(v.abscissa_tolerance) << "\n";
  const auto& s = c.smoothing;
  os << "\n[smoothing]\nhorizon = " << fmt(s.horizon) << "\ns = " << fmt(s.s) << "\neps = " << fmt(s.eps)
     << "\nseeds = " << s.seeds << "\nfrequencies = " << s.frequencies << "\ndt_fraction = " << fmt(s.dt_fraction)
     << "\nrough_s0 = " << fmt(s.rough_s0) << "\nprofile_times = " << fmt_list(s.profile_times)
     << "\nquadrature_tolerance = " << fmt(s.quadrature_tolerance) << "\n";
  os << "\n[compare]\nstability_factor = " << fmt(c.compare.stability_factor)
     << "\nabscissa_spread = " << fmt(c.compare.abscissa_spread) << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : config_text(config)) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace sdlab
