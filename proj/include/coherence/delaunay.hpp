#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "coherence/flow.hpp"

namespace coherence {

/// Sign of the orientation determinant of (a, b, c): +1 counter-clockwise,
/// -1 clockwise, 0 collinear. Exact: a floating-point filter falls back to
/// rational arithmetic when the sign is uncertain.
int orient2d(Vec2 a, Vec2 b, Vec2 c);

/// Sign of the in-circle determinant: +1 when d lies strictly inside the
/// circle through the counter-clockwise triangle (a, b, c). Exact.
int incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

Vec2 circumcenter(Vec2 a, Vec2 b, Vec2 c);

/// Delaunay triangulation of a planar point set by incremental insertion
/// (Bowyer-Watson with a ghost vertex for the hull). Returns counter-clockwise
/// vertex triples. Cocircular ties are broken by a symbolic perturbation
/// ranked by `priority` (point index when empty), which makes the result
/// independent of insertion order.
/// Throws DegenerateCloud for fewer than three distinct points, all points
/// collinear, or duplicate points.
std::vector<std::array<int, 3>> delaunay_triangulate(std::span<const Vec2> points,
                                                     std::span<const std::int64_t> priority = {});

/// Delaunay triangulation of the 3 x 3 tiling of `points` by the periods,
/// the building block of periodic meshes. Copy tile * n + k is point k
/// shifted by (sx, sy) * period with tile = (sy + 1) * 3 + (sx + 1). The
/// predicates are exact for the shifted coordinates, not their rounded
/// values, and ties are keyed on k, so translated copies of any
/// configuration are always triangulated identically.
std::vector<std::array<int, 3>> delaunay_triangulate_tiled(std::span<const Vec2> points,
                                                           Vec2 period);

}  // namespace coherence
