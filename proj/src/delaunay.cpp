#include "coherence/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include <gmpxx.h>

#include "coherence/errors.hpp"

namespace coherence {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon() * 0.5;  // 2^-53
constexpr double kCcwErrBound = (3.0 + 16.0 * kEps) * kEps;
constexpr double kIccErrBound = (10.0 + 96.0 * kEps) * kEps;

int sign_of(const mpq_class& v) { return sgn(v); }

int orient2d_exact(Vec2 a, Vec2 b, Vec2 c) {
  const mpq_class acx = mpq_class(a.x) - c.x, bcx = mpq_class(b.x) - c.x;
  const mpq_class acy = mpq_class(a.y) - c.y, bcy = mpq_class(b.y) - c.y;
  return sign_of(acx * bcy - acy * bcx);
}

int incircle_exact(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const mpq_class adx = mpq_class(a.x) - d.x, ady = mpq_class(a.y) - d.y;
  const mpq_class bdx = mpq_class(b.x) - d.x, bdy = mpq_class(b.y) - d.y;
  const mpq_class cdx = mpq_class(c.x) - d.x, cdy = mpq_class(c.y) - d.y;
  const mpq_class alift = adx * adx + ady * ady;
  const mpq_class blift = bdx * bdx + bdy * bdy;
  const mpq_class clift = cdx * cdx + cdy * cdy;
  const mpq_class det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                        clift * (adx * bdy - bdx * ady);
  return sign_of(det);
}

}  // namespace

int orient2d(Vec2 a, Vec2 b, Vec2 c) {
  const double detleft = (a.x - c.x) * (b.y - c.y);
  const double detright = (a.y - c.y) * (b.x - c.x);
  const double det = detleft - detright;
  double detsum = 0.0;
  if (detleft > 0.0) {
    if (detright <= 0.0) return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    detsum = detleft + detright;
  } else if (detleft < 0.0) {
    if (detright >= 0.0) return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    detsum = -detleft - detright;
  } else {
    return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
  }
  const double bound = kCcwErrBound * detsum;
  if (det >= bound && det != 0.0) return 1;
  if (-det >= bound && det != 0.0) return -1;
  return orient2d_exact(a, b, c);
}

int incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double adx = a.x - d.x, bdx = b.x - d.x, cdx = c.x - d.x;
  const double ady = a.y - d.y, bdy = b.y - d.y, cdy = c.y - d.y;
  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double alift = adx * adx + ady * ady;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double blift = bdx * bdx + bdy * bdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double clift = cdx * cdx + cdy * cdy;
  const double det =
      alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
  const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift +
                           (std::abs(cdxady) + std::abs(adxcdy)) * blift +
                           (std::abs(adxbdy) + std::abs(bdxady)) * clift;
  const double bound = kIccErrBound * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return incircle_exact(a, b, c, d);
}

Vec2 circumcenter(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 ab = b - a, ac = c - a;
  const double d = 2.0 * cross(ab, ac);
  const double ab2 = dot(ab, ab), ac2 = dot(ac, ac);
  return {a.x + (ac.y * ab2 - ab.y * ac2) / d, a.y + (ab.x * ac2 - ac.x * ab2) / d};
}

namespace {

constexpr int kGhost = -1;

struct Tri {
  std::array<int, 3> v;
  std::array<int, 3> nb;  // nb[e] is across the edge opposite v[e]
  bool alive = true;
};

std::uint64_t hilbert_index(std::uint32_t x, std::uint32_t y, std::uint32_t order) {
  std::uint64_t d = 0;
  for (std::uint32_t s = order >> 1; s > 0; s >>= 1) {
    const std::uint32_t rx = (x & s) > 0;
    const std::uint32_t ry = (y & s) > 0;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

// Exact predicates for copies of a point set translated by whole periods.
// The rounded copies drive the floating-point filter; its error bound is
// widened by the rounding of the translation, and undecided signs are
// recomputed on base + shift * period in rational arithmetic.
class TiledExact {
 public:
  TiledExact(std::span<const Vec2> base, Vec2 period, std::span<const Vec2> approx,
             std::span<const std::array<int, 2>> shift)
      : base_(base), period_(period), approx_(approx), shift_(shift) {
    double largest = 0.0;
    for (const Vec2& q : approx) largest = std::max({largest, std::abs(q.x), std::abs(q.y)});
    // Each rounded coordinate is within half an ulp; differences within two.
    err_ = 4.0 * kEps * largest;
  }

  int orient(int a, int b, int c) const {
    const Vec2 pa = approx_[a], pb = approx_[b], pc = approx_[c];
    const double acx = pa.x - pc.x, bcx = pb.x - pc.x, acy = pa.y - pc.y, bcy = pb.y - pc.y;
    const double det = acx * bcy - acy * bcx;
    const double m = std::max({std::abs(acx), std::abs(bcx), std::abs(acy), std::abs(bcy)});
    const double bound = kCcwErrBound * (std::abs(acx * bcy) + std::abs(acy * bcx)) +
                         2.0 * err_ * (2.0 * m + err_) * (1.0 + 1e-10);
    if (det > bound) return 1;
    if (-det > bound) return -1;
    const auto [ax, ay] = exact(a);
    const auto [bx, by] = exact(b);
    const auto [cx, cy] = exact(c);
    return sgn((ax - cx) * (by - cy) - (ay - cy) * (bx - cx));
  }

  int incircle(int a, int b, int c, int d) const {
    const Vec2 pa = approx_[a], pb = approx_[b], pc = approx_[c], pd = approx_[d];
    const double adx = pa.x - pd.x, bdx = pb.x - pd.x, cdx = pc.x - pd.x;
    const double ady = pa.y - pd.y, bdy = pb.y - pd.y, cdy = pc.y - pd.y;
    const double alift = adx * adx + ady * ady;
    const double blift = bdx * bdx + bdy * bdy;
    const double clift = cdx * cdx + cdy * cdy;
    const double det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                       clift * (adx * bdy - bdx * ady);
    const double permanent = (std::abs(bdx * cdy) + std::abs(cdx * bdy)) * alift +
                             (std::abs(cdx * ady) + std::abs(adx * cdy)) * blift +
                             (std::abs(adx * bdy) + std::abs(bdx * ady)) * clift;
    const double m = std::max({std::abs(adx), std::abs(bdx), std::abs(cdx), std::abs(ady),
                               std::abs(bdy), std::abs(cdy)});
    // Twelve quartic monomials, each factor off by at most err_.
    const double e = err_;
    const double shift_bound =
        12.0 * e * (4.0 * m * m * m + 6.0 * m * m * e + 4.0 * m * e * e + e * e * e);
    const double bound = kIccErrBound * permanent + shift_bound * (1.0 + 1e-10);
    if (det > bound) return 1;
    if (-det > bound) return -1;
    const auto [ax, ay] = exact(a);
    const auto [bx, by] = exact(b);
    const auto [cx, cy] = exact(c);
    const auto [dx, dy] = exact(d);
    const mpq_class qadx = ax - dx, qady = ay - dy, qbdx = bx - dx, qbdy = by - dy;
    const mpq_class qcdx = cx - dx, qcdy = cy - dy;
    const mpq_class qdet = (qadx * qadx + qady * qady) * (qbdx * qcdy - qcdx * qbdy) +
                           (qbdx * qbdx + qbdy * qbdy) * (qcdx * qady - qadx * qcdy) +
                           (qcdx * qcdx + qcdy * qcdy) * (qadx * qbdy - qbdx * qady);
    return sgn(qdet);
  }

  bool same(int a, int b) const { return exact(a) == exact(b); }

 private:
  std::span<const Vec2> base_;
  Vec2 period_;
  std::span<const Vec2> approx_;
  std::span<const std::array<int, 2>> shift_;
  double err_ = 0.0;

  std::pair<mpq_class, mpq_class> exact(int i) const {
    const Vec2 p = base_[static_cast<std::size_t>(i) % base_.size()];
    return {mpq_class(p.x) + mpq_class(shift_[i][0]) * mpq_class(period_.x),
            mpq_class(p.y) + mpq_class(shift_[i][1]) * mpq_class(period_.y)};
  }
};

class Triangulator {
 public:
  Triangulator(std::span<const Vec2> pts, std::span<const std::int64_t> priority,
               const TiledExact* tiled = nullptr)
      : p_(pts), priority_(priority), tiled_(tiled) {}

  std::vector<std::array<int, 3>> run() {
    const auto order = insertion_order();
    seed(order);
    for (int idx : order) {
      if (idx == seed_[0] || idx == seed_[1] || idx == seed_[2]) continue;
      insert(idx);
    }
    std::vector<std::array<int, 3>> out;
    for (const Tri& t : tris_)
      if (t.alive && t.v[2] != kGhost) out.push_back(t.v);
    return out;
  }

 private:
  std::span<const Vec2> p_;
  std::span<const std::int64_t> priority_;
  const TiledExact* tiled_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  int last_ = 0;
  std::array<int, 3> seed_{};
  unsigned walk_rotation_ = 0;

  std::vector<int> insertion_order() const {
    const std::size_t n = p_.size();
    double xmin = p_[0].x, xmax = p_[0].x, ymin = p_[0].y, ymax = p_[0].y;
    for (const Vec2& q : p_) {
      xmin = std::min(xmin, q.x);
      xmax = std::max(xmax, q.x);
      ymin = std::min(ymin, q.y);
      ymax = std::max(ymax, q.y);
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-300});
    constexpr std::uint32_t order = 1u << 16;
    std::vector<std::pair<std::uint64_t, int>> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto qx = static_cast<std::uint32_t>((p_[i].x - xmin) / span * (order - 1));
      const auto qy = static_cast<std::uint32_t>((p_[i].y - ymin) / span * (order - 1));
      keys[i] = {hilbert_index(qx, qy, order), static_cast<int>(i)};
    }
    std::sort(keys.begin(), keys.end());
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = keys[i].second;
    return out;
  }

  bool is_ghost(int t) const { return tris_[t].v[2] == kGhost; }

  int orient(int a, int b, int c) const {
    return tiled_ ? tiled_->orient(a, b, c) : orient2d(p_[a], p_[b], p_[c]);
  }

  bool same_point(int a, int b) const {
    if (!(p_[a] == p_[b])) return false;
    return tiled_ ? tiled_->same(a, b) : true;
  }

  void seed(const std::vector<int>& order) {
    if (p_.size() < 3) throw DegenerateCloud("need at least three points");
    const int a = order[0];
    int b = -1;
    for (int idx : order)
      if (!same_point(idx, a)) {
        b = idx;
        break;
      }
    if (b < 0) throw DegenerateCloud("all points coincide");
    int c = -1;
    for (int idx : order)
      if (orient(a, b, idx) != 0) {
        c = idx;
        break;
      }
    if (c < 0) throw DegenerateCloud("all points are collinear");
    int bb = b, cc = c;
    if (orient(a, b, c) < 0) std::swap(bb, cc);
    seed_ = {a, bb, cc};
    tris_.push_back({{a, bb, cc}, {-1, -1, -1}});
    tris_.push_back({{bb, a, kGhost}, {-1, -1, -1}});
    tris_.push_back({{cc, bb, kGhost}, {-1, -1, -1}});
    tris_.push_back({{a, cc, kGhost}, {-1, -1, -1}});
    for (int i = 0; i < 4; ++i)
      for (int e = 0; e < 3; ++e) {
        const int u = tris_[i].v[(e + 1) % 3], w = tris_[i].v[(e + 2) % 3];
        for (int j = 0; j < 4; ++j) {
          if (j == i) continue;
          if (has_edge(j, w, u)) tris_[i].nb[e] = j;
        }
      }
    last_ = 0;
    stamp_.assign(tris_.size(), 0);
  }

  bool has_edge(int t, int u, int w) const {
    const auto& v = tris_[t].v;
    for (int e = 0; e < 3; ++e)
      if (v[e] == u && v[(e + 1) % 3] == w) return true;
    return false;
  }

  int edge_index(int t, int u, int w) const {
    const auto& v = tris_[t].v;
    for (int e = 0; e < 3; ++e)
      if (v[e] != u && v[e] != w) return e;
    return -1;
  }

  // In-circle test with the lifted heights perturbed symbolically by
  // epsilon^rank, ranks taken from the priority keys. Exact ties are then
  // decided by the keys alone, so translated copies of a cocircular group
  // are split the same way regardless of insertion order.
  int incircle_perturbed(int a, int b, int c, int d) const {
    const int s = tiled_ ? tiled_->incircle(a, b, c, d) : incircle(p_[a], p_[b], p_[c], p_[d]);
    if (s != 0) return s;
    std::array<int, 4> idx{a, b, c, d};
    std::array<int, 4> order{0, 1, 2, 3};
    auto key = [&](int i) {
      return std::pair<std::int64_t, int>{priority_.empty() ? idx[i] : priority_[idx[i]], idx[i]};
    };
    std::sort(order.begin(), order.end(), [&](int l, int r) { return key(l) < key(r); });
    for (int o : order) {
      int sign = 0;
      switch (o) {
        case 0: sign = orient(b, c, d); break;
        case 1: sign = orient(c, a, d); break;
        case 2: sign = orient(a, b, d); break;
        default: sign = -orient(a, b, c); break;
      }
      if (sign != 0) return sign;
    }
    return 0;
  }

  bool in_conflict(int t, int qi) const {
    const Vec2 q = p_[qi];
    const auto& v = tris_[t].v;
    if (v[2] == kGhost) {
      const Vec2 a = p_[v[0]], b = p_[v[1]];
      const int o = orient(v[0], v[1], qi);
      if (o > 0) return true;
      if (o < 0) return false;
      return dot(q - a, b - a) > 0.0 && dot(q - b, a - b) > 0.0;
    }
    return incircle_perturbed(v[0], v[1], v[2], qi) > 0;
  }

  int locate(int qi) {
    int t = last_;
    const std::size_t limit = 4 * tris_.size() + 16;
    for (std::size_t step = 0; step < limit; ++step) {
      const auto& tri = tris_[t];
      bool moved = false;
      const unsigned r0 = walk_rotation_++ % 3;
      for (unsigned r = 0; r < 3; ++r) {
        const unsigned e = (r0 + r) % 3;
        const int a = tri.v[(e + 1) % 3], b = tri.v[(e + 2) % 3];
        if (orient(a, b, qi) < 0) {
          t = tri.nb[e];
          moved = true;
          break;
        }
      }
      if (!moved || is_ghost(t)) return t;
    }
    throw DegenerateCloud("point location did not terminate");
  }

  int new_tri(const Tri& tri) {
    if (!free_.empty()) {
      const int id = free_.back();
      free_.pop_back();
      tris_[id] = tri;
      return id;
    }
    tris_.push_back(tri);
    stamp_.push_back(0);
    return static_cast<int>(tris_.size()) - 1;
  }

  void insert(int idx) {
    const int start = locate(idx);
    if (!is_ghost(start))
      for (int v : tris_[start].v)
        if (same_point(v, idx)) throw DegenerateCloud("duplicate point in cloud");

    struct BoundaryEdge {
      int u, w, outside;
    };
    ++epoch_;
    std::vector<int> cavity{start};
    std::vector<BoundaryEdge> boundary;
    stamp_[start] = epoch_;
    for (std::size_t k = 0; k < cavity.size(); ++k) {
      const int t = cavity[k];
      for (int e = 0; e < 3; ++e) {
        const int nb = tris_[t].nb[e];
        if (stamp_[nb] == epoch_) continue;
        if (in_conflict(nb, idx)) {
          stamp_[nb] = epoch_;
          cavity.push_back(nb);
        } else {
          boundary.push_back({tris_[t].v[(e + 1) % 3], tris_[t].v[(e + 2) % 3], nb});
        }
      }
    }
    for (int t : cavity) {
      tris_[t].alive = false;
      free_.push_back(t);
    }

    std::vector<int> created;
    created.reserve(boundary.size());
    std::vector<std::pair<int, int>> by_start, by_end;
    for (const auto& be : boundary) {
      const int id = new_tri({{be.u, be.w, idx}, {-1, -1, be.outside}});
      created.push_back(id);
      const int e = edge_index(be.outside, be.u, be.w);
      tris_[be.outside].nb[e] = id;
      by_start.emplace_back(be.u, id);
      by_end.emplace_back(be.w, id);
    }
    auto lookup = [](const std::vector<std::pair<int, int>>& m, int key) {
      for (const auto& [k, id] : m)
        if (k == key) return id;
      return -1;
    };
    for (std::size_t i = 0; i < created.size(); ++i) {
      Tri& t = tris_[created[i]];
      t.nb[0] = lookup(by_start, t.v[1]);  // across (w, q)
      t.nb[1] = lookup(by_end, t.v[0]);    // across (q, u)
    }
    for (int id : created) {
      Tri& t = tris_[id];
      while (t.v[0] == kGhost || t.v[1] == kGhost) {
        std::rotate(t.v.begin(), t.v.begin() + 1, t.v.end());
        std::rotate(t.nb.begin(), t.nb.begin() + 1, t.nb.end());
      }
      if (t.v[2] != kGhost) last_ = id;
    }
  }
};

}  // namespace

std::vector<std::array<int, 3>> delaunay_triangulate(std::span<const Vec2> points,
                                                     std::span<const std::int64_t> priority) {
  if (!priority.empty() && priority.size() != points.size())
    throw DegenerateCloud("one priority key per point required");
  for (const Vec2& q : points)
    if (!std::isfinite(q.x) || !std::isfinite(q.y))
      throw DegenerateCloud("non-finite point in cloud");
  return Triangulator(points, priority).run();
}

std::vector<std::array<int, 3>> delaunay_triangulate_tiled(std::span<const Vec2> points,
                                                           Vec2 period) {
  const std::size_t n = points.size();
  if (!(period.x > 0.0) || !(period.y > 0.0) || !std::isfinite(period.x) ||
      !std::isfinite(period.y))
    throw DegenerateCloud("periods must be positive and finite");
  for (const Vec2& q : points)
    if (!std::isfinite(q.x) || !std::isfinite(q.y))
      throw DegenerateCloud("non-finite point in cloud");
  std::vector<Vec2> approx;
  std::vector<std::array<int, 2>> shift;
  std::vector<std::int64_t> priority;
  approx.reserve(9 * n);
  shift.reserve(9 * n);
  priority.reserve(9 * n);
  for (int sy = -1; sy <= 1; ++sy)
    for (int sx = -1; sx <= 1; ++sx)
      for (std::size_t k = 0; k < n; ++k) {
        approx.push_back({points[k].x + sx * period.x, points[k].y + sy * period.y});
        shift.push_back({sx, sy});
        priority.push_back(static_cast<std::int64_t>(k));
      }
  const TiledExact exact(points, period, approx, shift);
  return Triangulator(approx, priority, &exact).run();
}

}  // namespace coherence
