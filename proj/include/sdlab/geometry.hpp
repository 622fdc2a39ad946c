#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace sdlab {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

/// Closed-form distance from p to the segment [a, b].
double point_segment_distance(Point p, Point a, Point b);

struct Disc {
  Point center;
  double radius = 1.0;
};

struct BoxDomain {
  Point lower;
  Point upper;

  double width() const { return upper.x - lower.x; }
  double height() const { return upper.y - lower.y; }
  Point center() const { return {0.5 * (lower.x + upper.x), 0.5 * (lower.y + upper.y)}; }
};

/// Distance from a point inside the box to its boundary. Negative outside.
double boundary_distance(const BoxDomain& box, Point p);

/// The obstacle scene: box B, disc obstacles O_i, collar width eps0 and the
/// damping amplitude on the collar.
struct SceneConfig {
  BoxDomain box;
  std::vector<Disc> obstacles;
  double eps0 = 0.5;
  double amplitude = 1.0;
};

/// Throws InvalidSceneError naming the first violated scene invariant.
void validate_scene(const SceneConfig& scene);

/// Stable 64-bit FNV-1a hash of the canonical scene text.
std::uint64_t scene_hash(const SceneConfig& scene);
std::string hash_hex(std::uint64_t hash);

struct HullClearance {
  int i = 0;
  int j = 0;
  int k = 0;
  double clearance = 0.0;
};

struct IkawaReport {
  int count = 0;
  double kappa = 0.0;
  /// Minimum pairwise gap; +inf when there is a single obstacle.
  double min_gap = std::numeric_limits<double>::infinity();
  bool kappa_l_ok = true;
  std::vector<HullClearance> hull_clearances;
  bool all_ok = true;
};

IkawaReport validate_ikawa(const SceneConfig& scene);

/// Signed clearance between dk and the convex hull of di and dj (a stadium
/// when the radii agree). Positive iff the two sets are disjoint.
double hull_clearance(const Disc& di, const Disc& dj, const Disc& dk);

struct Segment {
  Point a;
  Point b;
  double length() const { return distance(a, b); }
};

/// Bouncing-ball orbit between the closest pair of obstacles.
Segment trapped_segment(const SceneConfig& scene);

struct OrbitCheck {
  bool uncontrolled = false;
  /// min over the trapped segment of dist(., dB) minus 2 eps0.
  double margin = 0.0;
};

OrbitCheck verify_uncontrolled_orbit(const SceneConfig& scene);

/// Node-based rasterization of the box. Nodes sit at box.lower + (i, j) h;
/// node ids are j * nx + i.
class GridMask {
 public:
  GridMask(BoxDomain box, int cells_x, int cells_y, double h);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int cells_x() const { return nx_ - 1; }
  int cells_y() const { return ny_ - 1; }
  double h() const { return h_; }
  const BoxDomain& box() const { return box_; }

  int node_id(int i, int j) const { return j * nx_ + i; }
  int node_i(int node) const { return node % nx_; }
  int node_j(int node) const { return node / nx_; }
  Point coordinates(int i, int j) const;
  Point coordinates(int node) const { return coordinates(node_i(node), node_j(node)); }

  bool interior(int i, int j) const { return flags_[node_id(i, j)] != 0; }
  /// Interior index of a node or -1.
  int index(int i, int j) const { return index_[node_id(i, j)]; }
  int index(int node) const { return index_[node]; }

  int interior_count() const { return static_cast<int>(interior_nodes_.size()); }
  const std::vector<int>& interior_nodes() const { return interior_nodes_; }

  /// Exact distance of an interior-grid node to the box boundary,
  /// computed from integer offsets so mirrored nodes agree bitwise.
  double boundary_distance(int node) const;

  void set_interior(int i, int j, bool value);
  void finalize();

 private:
  BoxDomain box_;
  int nx_;
  int ny_;
  double h_;
  std::vector<std::uint8_t> flags_;
  std::vector<int> index_;
  std::vector<int> interior_nodes_;
};

/// Rasterizes the scene at n nodes per unit length. Throws
/// UnderResolvedError when an obstacle or the minimal gap spans fewer than
/// eight cells, and DegenerateDomainError when nothing is interior.
GridMask rasterize(const SceneConfig& scene, int nodes_per_unit);

/// Analytic classification used by rasterize: strictly inside the box and
/// strictly outside every disc.
bool in_domain(const SceneConfig& scene, Point p);

}  // namespace sdlab
