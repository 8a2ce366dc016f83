#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "coherence/delaunay.hpp"
#include "coherence/errors.hpp"

using namespace coherence;

namespace {

double signed_area(const std::vector<Vec2>& p, const std::array<int, 3>& t) {
  return 0.5 * cross(p[t[1]] - p[t[0]], p[t[2]] - p[t[0]]);
}

// Brute-force empty-circle check: no input point strictly inside any circumcircle.
bool empty_circles(const std::vector<Vec2>& p, const std::vector<std::array<int, 3>>& tris) {
  for (const auto& t : tris)
    for (std::size_t q = 0; q < p.size(); ++q)
      if (incircle(p[t[0]], p[t[1]], p[t[2]], p[q]) > 0) return false;
  return true;
}

double hull_area(std::vector<Vec2> p) {
  std::sort(p.begin(), p.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 1] - h[k - 2], p[i] - h[k - 2]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 1] - h[k - 2], p[i] - h[k - 2]) <= 0) --k;
    h[k++] = p[i];
  }
  double a = 0;
  for (std::size_t i = 0; i + 1 < k; ++i) a += cross(h[i], h[i + 1]);
  return 0.5 * a;
}

}  // namespace

TEST_CASE("predicates") {
  CHECK(orient2d({0, 0}, {1, 0}, {0, 1}) == 1);
  CHECK(orient2d({0, 0}, {0, 1}, {1, 0}) == -1);
  CHECK(orient2d({0, 0}, {1, 1}, {3, 3}) == 0);
  // Nearly collinear points where naive evaluation is unreliable.
  CHECK(orient2d({0.5, 0.5}, {12, 12}, {24, 24}) == 0);
  const double tiny = std::ldexp(1.0, -50);
  CHECK(orient2d({0.5, 0.5}, {12, 12}, {24, 24 + 24 * tiny}) == 1);
  CHECK(incircle({0, 0}, {1, 0}, {0, 1}, {1, 1}) == 0);
  CHECK(incircle({0, 0}, {1, 0}, {0, 1}, {0.5, 0.5}) == 1);
  CHECK(incircle({0, 0}, {1, 0}, {0, 1}, {2, 2}) == -1);
  const Vec2 c = circumcenter({0, 0}, {2, 0}, {0, 2});
  CHECK(c.x == doctest::Approx(1.0));
  CHECK(c.y == doctest::Approx(1.0));
}

TEST_CASE("square corners give two triangles") {
  std::vector<Vec2> p{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto tris = delaunay_triangulate(p);
  REQUIRE(tris.size() == 2);
  double area = 0;
  for (const auto& t : tris) {
    CHECK(signed_area(p, t) > 0);
    area += signed_area(p, t);
  }
  CHECK(area == doctest::Approx(1.0));
}

TEST_CASE("regular lattice with cocircular quadruples") {
  const int m = 12;
  std::vector<Vec2> p;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) p.push_back({double(i), double(j)});
  const auto tris = delaunay_triangulate(p);
  CHECK(tris.size() == std::size_t(2 * (m - 1) * (m - 1)));
  double area = 0;
  for (const auto& t : tris) {
    CHECK(signed_area(p, t) > 0);
    area += signed_area(p, t);
  }
  CHECK(area == doctest::Approx((m - 1.0) * (m - 1.0)));
  CHECK(empty_circles(p, tris));
}

TEST_CASE("random clouds satisfy the empty-circle property") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec2> p(300);
    for (auto& q : p) q = {u(rng), u(rng)};
    const auto tris = delaunay_triangulate(p);
    double area = 0;
    std::set<int> used;
    for (const auto& t : tris) {
      REQUIRE(signed_area(p, t) > 0);
      area += signed_area(p, t);
      used.insert(t.begin(), t.end());
    }
    CHECK(used.size() == p.size());
    CHECK(area == doctest::Approx(hull_area(p)).epsilon(1e-12));
    CHECK(empty_circles(p, tris));
    // Euler: 2n - 2 - h triangles; at least bounded by 2n - 5.
    CHECK(tris.size() <= 2 * p.size() - 5);
  }
}

TEST_CASE("points on a line extension of the hull") {
  std::vector<Vec2> p{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {3, 0}, {-1, 0}, {0, 2}};
  const auto tris = delaunay_triangulate(p);
  double area = 0;
  for (const auto& t : tris) area += signed_area(p, t);
  CHECK(area == doctest::Approx(hull_area(p)));
  CHECK(empty_circles(p, tris));
}

TEST_CASE("degenerate clouds are rejected") {
  std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(delaunay_triangulate(line), DegenerateCloud);
  std::vector<Vec2> two{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(delaunay_triangulate(two), DegenerateCloud);
  std::vector<Vec2> dup{{0, 0}, {1, 0}, {0, 1}, {1, 0}};
  CHECK_THROWS_AS(delaunay_triangulate(dup), DegenerateCloud);
}

namespace {

// Triangles of a tiled triangulation grouped by the tile of their smallest
// base index, each stored as base indices with shifts relative to it.
std::vector<std::set<std::array<int, 9>>> classes_by_anchor(
    const std::vector<std::array<int, 3>>& tris, int n) {
  std::vector<std::set<std::array<int, 9>>> out(9);
  for (const auto& t : tris) {
    int first = 0;
    for (int c = 1; c < 3; ++c)
      if (t[c] % n < t[first] % n) first = c;
    const int anchor = t[first] / n;
    std::array<int, 9> key{};
    for (int c = 0; c < 3; ++c) {
      const int v = t[(first + c) % 3];
      key[3 * c] = v % n;
      key[3 * c + 1] = (v / n) % 3 - anchor % 3;
      key[3 * c + 2] = (v / n) / 3 - anchor / 3;
    }
    out[anchor].insert(key);
  }
  return out;
}

}  // namespace

TEST_CASE("tiled triangulation treats every copy alike") {
  const double period = 2.0 * std::acos(-1.0);
  SUBCASE("cocircular lattice") {
    std::vector<Vec2> pts;
    const int m = 9;
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) pts.push_back({period * i / m, period * j / m});
    const auto tris = delaunay_triangulate_tiled(pts, {period, period});
    const auto classes = classes_by_anchor(tris, static_cast<int>(pts.size()));
    CHECK(classes[4].size() == 2 * pts.size());
  }
  SUBCASE("clusters near the cell corner") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, period);
    std::vector<Vec2> pts;
    for (int k = 0; k < 200; ++k) pts.push_back({u(rng), u(rng)});
    // Nearly collinear points a few nanometres from the corner, mirrored
    // across it, where rounded shifted coordinates lose the geometry.
    pts.push_back({0.0, 0.0});
    for (double s : {2e-9, 6.3e-9}) {
      pts.push_back({s, s * (2.0 / 3.0)});
      pts.push_back({period - s, period - s * (2.0 / 3.0)});
    }
    const auto tris = delaunay_triangulate_tiled(pts, {period, period});
    const auto classes = classes_by_anchor(tris, static_cast<int>(pts.size()));
    CHECK(classes[4].size() == 2 * pts.size());
    for (const auto& key : classes[4]) {
      // A class anchored in the central cell reappears one cell over
      // whenever that copy lies inside the tiling.
      bool inside_right = true;
      for (int c = 0; c < 3; ++c) inside_right = inside_right && key[3 * c + 1] + 1 <= 1;
      if (inside_right) CHECK(classes[5].count(key) == 1);
    }
  }
}
