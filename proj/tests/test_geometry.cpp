#include <cmath>
#include <random>

#include "sdlab/error.hpp"
#include "sdlab/geometry.hpp"
#include "support.hpp"

using namespace sdlab;
using sdlab::test::box_scene;

namespace {

SceneConfig three_discs(Point a, Point b, Point c) {
  SceneConfig s = box_scene(-20.0, -20.0, 20.0, 20.0);
  s.obstacles = {{a, 1.0}, {b, 1.0}, {c, 1.0}};
  return s;
}

// Minimum of dist(., dB) over a dense sampling of the segment.
double sampled_box_distance(const BoxDomain& box, const Segment& seg, int samples) {
  double best = 1e300;
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const Point p{seg.a.x + t * (seg.b.x - seg.a.x), seg.a.y + t * (seg.b.y - seg.a.y)};
    best = std::min({best, p.x - box.lower.x, box.upper.x - p.x, p.y - box.lower.y, box.upper.y - p.y});
  }
  return best;
}

}  // namespace

TEST_CASE("two discs need no kappa-L check") {
  SceneConfig s = box_scene(-8, -8, 8, 8);
  s.obstacles = {{{-2, 0}, 1}, {{2, 0}, 1}};
  const IkawaReport r = validate_ikawa(s);
  CHECK(r.count == 2);
  CHECK(r.kappa_l_ok);
  CHECK(r.all_ok);
  CHECK(r.min_gap == doctest::Approx(2.0));
}

TEST_CASE("equilateral triangle of side 6 satisfies the Ikawa conditions") {
  const double h = 6.0 * std::sqrt(3.0) / 2.0;
  const IkawaReport r = validate_ikawa(three_discs({-3, 0}, {3, 0}, {0, h}));
  CHECK(r.kappa == doctest::Approx(1.0));
  CHECK(r.min_gap == doctest::Approx(4.0));
  CHECK(r.kappa * r.min_gap > 3.0);
  CHECK(r.kappa_l_ok);
  REQUIRE(r.hull_clearances.size() == 3);
  for (const auto& c : r.hull_clearances) CHECK(c.clearance == doctest::Approx(h - 2.0).epsilon(1e-12));
  CHECK(r.all_ok);
}

TEST_CASE("collinear centers put the middle disc inside the hull") {
  const IkawaReport r = validate_ikawa(three_discs({-4, 0}, {0, 0}, {4, 0}));
  CHECK_FALSE(r.all_ok);
  double worst = 1e300;
  for (const auto& c : r.hull_clearances) worst = std::min(worst, c.clearance);
  CHECK(worst == doctest::Approx(-2.0));
}

TEST_CASE("overlapping obstacles are rejected") {
  SceneConfig s = box_scene(-8, -8, 8, 8);
  s.obstacles = {{{-0.5, 0}, 1}, {{0.5, 0}, 1}};
  CHECK_THROWS_AS(validate_ikawa(s), InvalidSceneError);
}

TEST_CASE("hull clearance examples") {
  const Disc a{{-3, 0}, 1};
  const Disc b{{3, 0}, 1};
  CHECK(hull_clearance(a, b, {{0, 5}, 1}) == doctest::Approx(3.0));
  CHECK(hull_clearance(a, b, {{1, 0}, 1}) == doctest::Approx(-2.0));
  CHECK(hull_clearance(a, b, {{0, 100}, 1}) == doctest::Approx(98.0));
  CHECK_THROWS_AS(hull_clearance(a, {{3, 0}, 2}, {{0, 5}, 1}), UnsupportedConfigurationError);
}

TEST_CASE("hull clearance is symmetric in the hull pair") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int t = 0; t < 200; ++t) {
    const Disc a{{u(rng), u(rng)}, 0.7};
    const Disc b{{u(rng), u(rng)}, 0.7};
    const Disc c{{u(rng), u(rng)}, 0.3};
    CHECK(hull_clearance(a, b, c) == doctest::Approx(hull_clearance(b, a, c)).epsilon(1e-12));
  }
}

TEST_CASE("Ikawa verdict is invariant under rigid motions") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(0, 2 * M_PI);
  std::uniform_real_distribution<double> shift(-3, 3);
  const double h = 6.0 * std::sqrt(3.0) / 2.0;
  const std::vector<std::array<Point, 3>> scenes{{{{-3, 0}, {3, 0}, {0, h}}}, {{{-4, 0}, {0, 0}, {4, 0}}},
                                                 {{{-3, 0}, {3, 0}, {0, 1.5}}}};
  for (const auto& pts : scenes) {
    const IkawaReport base = validate_ikawa(three_discs(pts[0], pts[1], pts[2]));
    for (int t = 0; t < 50; ++t) {
      const double th = angle(rng);
      const double dx = shift(rng);
      const double dy = shift(rng);
      auto move = [&](Point p) {
        return Point{std::cos(th) * p.x - std::sin(th) * p.y + dx, std::sin(th) * p.x + std::cos(th) * p.y + dy};
      };
      const IkawaReport r = validate_ikawa(three_discs(move(pts[0]), move(pts[1]), move(pts[2])));
      CHECK(r.all_ok == base.all_ok);
      CHECK(std::abs(r.min_gap - base.min_gap) <= 1e-12 * std::max(1.0, base.min_gap));
      for (std::size_t i = 0; i < r.hull_clearances.size(); ++i) {
        CHECK(std::abs(r.hull_clearances[i].clearance - base.hull_clearances[i].clearance) <= 1e-12 * 10);
      }
    }
  }
}

TEST_CASE("trapped segment between the closest pair") {
  SceneConfig s = box_scene(-8, -8, 8, 8);
  s.obstacles = {{{-2, 0}, 1}, {{2, 0}, 1}};
  Segment seg = trapped_segment(s);
  CHECK(std::min(seg.a.x, seg.b.x) == doctest::Approx(-1.0));
  CHECK(std::max(seg.a.x, seg.b.x) == doctest::Approx(1.0));
  CHECK(seg.length() == doctest::Approx(2.0));

  s.obstacles = {{{0, -3}, 1}, {{0, 3}, 1}};
  seg = trapped_segment(s);
  CHECK(std::min(seg.a.y, seg.b.y) == doctest::Approx(-2.0));
  CHECK(std::max(seg.a.y, seg.b.y) == doctest::Approx(2.0));
  CHECK(seg.a.x == doctest::Approx(0.0));

  s.obstacles = {{{0, 0}, 1}};
  CHECK_THROWS_AS(trapped_segment(s), NoTrappedRayError);
}

TEST_CASE("trapped segment length equals the minimal gap") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-12, 12);
  for (int t = 0; t < 100; ++t) {
    SceneConfig s = box_scene(-20, -20, 20, 20);
    while (s.obstacles.size() < 4) {
      const Disc d{{u(rng), u(rng)}, 1.0};
      bool ok = true;
      for (const auto& e : s.obstacles) ok = ok && distance(d.center, e.center) > 2.5;
      if (ok) s.obstacles.push_back(d);
    }
    const IkawaReport r = validate_ikawa(s);
    CHECK(std::abs(trapped_segment(s).length() - r.min_gap) <= 1e-12 * r.min_gap);
  }
}

TEST_CASE("uncontrolled orbit witness on the preset scene") {
  SceneConfig s = sdlab::test::paper_scene();
  const OrbitCheck c = verify_uncontrolled_orbit(s);
  const double sampled = sampled_box_distance(s.box, trapped_segment(s), 10000);
  CHECK(sampled == doctest::Approx(7.0));
  CHECK(c.uncontrolled);
  CHECK(c.margin == doctest::Approx(sampled - 2 * s.eps0));
  CHECK(c.margin == doctest::Approx(6.0));

  s.eps0 = 4.0;
  const OrbitCheck wide = verify_uncontrolled_orbit(s);
  CHECK_FALSE(wide.uncontrolled);
  CHECK(wide.margin < 0.0);

  s.eps0 = 3.5;
  const OrbitCheck touching = verify_uncontrolled_orbit(s);
  CHECK(touching.margin == doctest::Approx(0.0));
  CHECK_FALSE(touching.uncontrolled);
}

TEST_CASE("rasterize counts interior nodes") {
  const GridMask empty = rasterize(box_scene(0, 0, 1, 1), 8);
  CHECK(empty.interior_count() == 49);

  SceneConfig covered = box_scene(0, 0, 1, 1);
  covered.obstacles = {{{0.5, 0.5}, 1.0}};
  CHECK_THROWS_AS(rasterize(covered, 8), DegenerateDomainError);

  SceneConfig coarse = sdlab::test::paper_scene();
  CHECK_THROWS_AS(rasterize(coarse, 2), UnderResolvedError);
}

TEST_CASE("rasterized flags match direct point classification") {
  const SceneConfig s = sdlab::test::paper_scene();
  const int n = 16;
  const GridMask mask = rasterize(s, n);
  const double h = 1.0 / n;
  int count = 0;
  bool all_match = true;
  for (int j = 0; j < mask.ny(); ++j) {
    for (int i = 0; i < mask.nx(); ++i) {
      const double x = s.box.lower.x + i * h;
      const double y = s.box.lower.y + j * h;
      bool inside = x > s.box.lower.x && x < s.box.upper.x && y > s.box.lower.y && y < s.box.upper.y;
      for (const auto& d : s.obstacles) {
        inside = inside && std::hypot(x - d.center.x, y - d.center.y) > d.radius;
      }
      count += inside ? 1 : 0;
      all_match = all_match && inside == mask.interior(i, j);
    }
  }
  CHECK(all_match);
  CHECK(mask.interior_count() == count);
}

TEST_CASE("scene validation") {
  SceneConfig s = sdlab::test::paper_scene();
  CHECK_NOTHROW(validate_scene(s));
  SceneConfig near_wall = s;
  near_wall.obstacles[0].center = {-6.5, 0};
  CHECK_THROWS_AS(validate_scene(near_wall), InvalidSceneError);
  SceneConfig no_damping = s;
  no_damping.amplitude = 0.0;
  CHECK_THROWS_AS(validate_scene(no_damping), InvalidSceneError);
  CHECK(scene_hash(s) == scene_hash(sdlab::test::paper_scene()));
  CHECK(scene_hash(s) != scene_hash(near_wall));
}
