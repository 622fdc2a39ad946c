#include "sdlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sdlab/error.hpp"

namespace sdlab {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return distance(p, a);
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, {a.x + t * dx, a.y + t * dy});
}

double boundary_distance(const BoxDomain& box, Point p) {
  return std::min({p.x - box.lower.x, box.upper.x - p.x, p.y - box.lower.y, box.upper.y - p.y});
}

void validate_scene(const SceneConfig& scene) {
  const auto& box = scene.box;
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
    throw InvalidSceneError("box must have positive width and height");
  }
  if (scene.obstacles.empty()) throw InvalidSceneError("scene needs at least one obstacle");
  if (!(scene.eps0 > 0.0)) throw InvalidSceneError("eps0 must be positive");
  if (scene.amplitude == 0.0 || !std::isfinite(scene.amplitude)) {
    throw InvalidSceneError("damping amplitude must be finite and nonzero");
  }
  const auto n = scene.obstacles.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Disc& d = scene.obstacles[i];
    if (!(d.radius > 0.0)) {
      throw InvalidSceneError("obstacle " + std::to_string(i) + " has nonpositive radius");
    }
    const double clearance = boundary_distance(box, d.center) - d.radius;
    if (!(clearance > 2.0 * scene.eps0)) {
      throw InvalidSceneError("obstacle " + std::to_string(i) +
                              " is within 2*eps0 of the box boundary (clearance " +
                              std::to_string(clearance) + ")");
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      const Disc& e = scene.obstacles[j];
      if (!(distance(d.center, e.center) > d.radius + e.radius)) {
        throw InvalidSceneError("obstacles " + std::to_string(i) + " and " + std::to_string(j) +
                                " overlap");
      }
    }
  }
}

std::uint64_t scene_hash(const SceneConfig& scene) {
  std::ostringstream os;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g;", v);
    os << buf;
  };
  put(scene.box.lower.x);
  put(scene.box.lower.y);
  put(scene.box.upper.x);
  put(scene.box.upper.y);
  for (const auto& d : scene.obstacles) {
    put(d.center.x);
    put(d.center.y);
    put(d.radius);
  }
  put(scene.eps0);
  put(scene.amplitude);
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

double hull_clearance(const Disc& di, const Disc& dj, const Disc& dk) {
  if (di.radius != dj.radius) {
    throw UnsupportedConfigurationError("hull clearance needs equal radii for the hull pair");
  }
  return point_segment_distance(dk.center, di.center, dj.center) - di.radius - dk.radius;
}

IkawaReport validate_ikawa(const SceneConfig& scene) {
  const auto& obs = scene.obstacles;
  const int n = static_cast<int>(obs.size());
  IkawaReport report;
  report.count = n;
  report.kappa = std::numeric_limits<double>::infinity();
  for (const auto& d : obs) report.kappa = std::min(report.kappa, 1.0 / d.radius);

  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double gap = distance(obs[i].center, obs[j].center) - obs[i].radius - obs[j].radius;
      if (!(gap > 0.0)) {
        throw InvalidSceneError("obstacles " + std::to_string(i) + " and " + std::to_string(j) +
                                " overlap");
      }
      report.min_gap = std::min(report.min_gap, gap);
    }
  }
  report.kappa_l_ok = n <= 2 || report.kappa * report.min_gap > n;

  bool hulls_ok = true;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const double c = hull_clearance(obs[i], obs[j], obs[k]);
        report.hull_clearances.push_back({i, j, k, c});
        hulls_ok = hulls_ok && c > 0.0;
      }
    }
  }
  report.all_ok = report.kappa_l_ok && hulls_ok;
  return report;
}

Segment trapped_segment(const SceneConfig& scene) {
  const auto& obs = scene.obstacles;
  if (obs.size() < 2) throw NoTrappedRayError("a trapped ray needs at least two obstacles");
  std::size_t best_i = 0;
  std::size_t best_j = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      const double gap = distance(obs[i].center, obs[j].center) - obs[i].radius - obs[j].radius;
      if (gap < best) {
        best = gap;
        best_i = i;
        best_j = j;
      }
    }
  }
  const Disc& a = obs[best_i];
  const Disc& b = obs[best_j];
  const double len = distance(a.center, b.center);
  const double ux = (b.center.x - a.center.x) / len;
  const double uy = (b.center.y - a.center.y) / len;
  return {{a.center.x + a.radius * ux, a.center.y + a.radius * uy},
          {b.center.x - b.radius * ux, b.center.y - b.radius * uy}};
}

OrbitCheck verify_uncontrolled_orbit(const SceneConfig& scene) {
  const Segment seg = trapped_segment(scene);
  // dist(., dB) is concave inside the box, so its minimum on a segment sits
  // at an endpoint.
  const double d = std::min(boundary_distance(scene.box, seg.a), boundary_distance(scene.box, seg.b));
  const double margin = d - 2.0 * scene.eps0;
  return {margin > 0.0, margin};
}

GridMask::GridMask(BoxDomain box, int cells_x, int cells_y, double h)
    : box_(box),
      nx_(cells_x + 1),
      ny_(cells_y + 1),
      h_(h),
      flags_(static_cast<std::size_t>(nx_) * ny_, 0),
      index_(static_cast<std::size_t>(nx_) * ny_, -1) {}

Point GridMask::coordinates(int i, int j) const {
  // Center-relative offsets keep mirrored nodes exact negatives of each other.
  const Point c = box_.center();
  return {c.x + (i - 0.5 * (nx_ - 1)) * h_, c.y + (j - 0.5 * (ny_ - 1)) * h_};
}

double GridMask::boundary_distance(int node) const {
  const int i = node_i(node);
  const int j = node_j(node);
  return std::min({i, nx_ - 1 - i, j, ny_ - 1 - j}) * h_;
}

void GridMask::set_interior(int i, int j, bool value) { flags_[node_id(i, j)] = value ? 1 : 0; }

void GridMask::finalize() {
  interior_nodes_.clear();
  std::fill(index_.begin(), index_.end(), -1);
  for (int node = 0; node < nx_ * ny_; ++node) {
    if (flags_[node]) {
      index_[node] = static_cast<int>(interior_nodes_.size());
      interior_nodes_.push_back(node);
    }
  }
}

bool in_domain(const SceneConfig& scene, Point p) {
  if (!(boundary_distance(scene.box, p) > 0.0)) return false;
  for (const auto& d : scene.obstacles) {
    const double dx = p.x - d.center.x;
    const double dy = p.y - d.center.y;
    if (!(dx * dx + dy * dy > d.radius * d.radius)) return false;
  }
  return true;
}

GridMask rasterize(const SceneConfig& scene, int nodes_per_unit) {
  if (nodes_per_unit <= 0) throw UnderResolvedError("nodes per unit length must be positive");
  const double h = 1.0 / nodes_per_unit;
  const double wx = scene.box.width() * nodes_per_unit;
  const double wy = scene.box.height() * nodes_per_unit;
  const int mx = static_cast<int>(std::lround(wx));
  const int my = static_cast<int>(std::lround(wy));
  if (mx < 2 || my < 2 || std::abs(wx - mx) > 1e-9 * wx || std::abs(wy - my) > 1e-9 * wy) {
    throw UnderResolvedError("box sides must be whole multiples of h with at least two cells");
  }
  constexpr double kMinCells = 8.0;
  const auto& obs = scene.obstacles;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double cells = 2.0 * obs[k].radius * nodes_per_unit;
    if (cells < kMinCells) {
      throw UnderResolvedError("obstacle " + std::to_string(k) + " spans " + std::to_string(cells) +
                               " cells, need at least 8");
    }
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      const double gap = distance(obs[i].center, obs[j].center) - obs[i].radius - obs[j].radius;
      if (gap * nodes_per_unit < kMinCells) {
        throw UnderResolvedError("gap between obstacles " + std::to_string(i) + " and " +
                                 std::to_string(j) + " spans " + std::to_string(gap * nodes_per_unit) +
                                 " cells, need at least 8");
      }
    }
  }

  GridMask mask(scene.box, mx, my, h);
  for (int j = 1; j < my; ++j) {
    for (int i = 1; i < mx; ++i) {
      const Point p = mask.coordinates(i, j);
      bool inside = true;
      for (const auto& d : obs) {
        const double dx = p.x - d.center.x;
        const double dy = p.y - d.center.y;
        if (!(dx * dx + dy * dy > d.radius * d.radius)) {
          inside = false;
          break;
        }
      }
      mask.set_interior(i, j, inside);
    }
  }
  mask.finalize();
  if (mask.interior_count() == 0) throw DegenerateDomainError("rasterized domain has no interior nodes");
  return mask;
}

}  // namespace sdlab
