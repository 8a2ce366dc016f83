#include "coherence/fem.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "coherence/delaunay.hpp"
#include "coherence/errors.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"

namespace coherence {

using json = nlohmann::json;

Vec2 SliceMesh::corner(std::size_t tri, int c) const {
  const Vec2 p = nodes[triangles[tri][c]];
  if (shifts.empty()) return p;
  const auto& s = shifts[tri][c];
  return {p.x + s[0] * domain.extents[0], p.y + s[1] * domain.extents[1]};
}

double SliceMesh::signed_area(std::size_t tri) const {
  const Vec2 a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
  return 0.5 * cross(b - a, c - a);
}

double SliceMesh::total_area() const {
  double sum = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) sum += signed_area(t);
  return sum;
}

namespace {

void reject_collinear(std::span<const Vec2> points) {
  if (points.size() < 3) throw DegenerateCloud("need at least three points");
  std::size_t b = 1;
  while (b < points.size() && points[b] == points[0]) ++b;
  if (b == points.size()) throw DegenerateCloud("all points coincide");
  for (std::size_t c = 1; c < points.size(); ++c)
    if (orient2d(points[0], points[b], points[c]) != 0) return;
  throw DegenerateCloud("all points are collinear");
}

SliceMesh triangulate_box(std::span<const Vec2> points, const DomainSpec& domain) {
  SliceMesh mesh;
  mesh.domain = domain;
  mesh.nodes.assign(points.begin(), points.end());
  mesh.triangles = delaunay_triangulate(points);
  return mesh;
}

SliceMesh triangulate_torus(std::span<const Vec2> points, const DomainSpec& domain) {
  const std::size_t n = points.size();
  const double lx = domain.extents[0], ly = domain.extents[1];
  SliceMesh mesh;
  mesh.domain = domain;
  mesh.nodes.reserve(n);
  for (const Vec2& p : points) mesh.nodes.push_back(domain.wrap(p));

  const auto all = delaunay_triangulate_tiled(mesh.nodes, {lx, ly});

  auto shift_of = [n](int copy) {
    const int tile = copy / static_cast<int>(n);
    return std::array<int, 2>{tile % 3 - 1, tile / 3 - 1};
  };

  for (const auto& tri : all) {
    std::array<int, 3> k;
    std::array<std::array<int, 2>, 3> s;
    for (int c = 0; c < 3; ++c) {
      k[c] = tri[c] % static_cast<int>(n);
      s[c] = shift_of(tri[c]);
    }
    // Every periodic triangle has exactly one copy whose smallest node index
    // sits in the central cell; keeping that copy is a purely combinatorial
    // choice, unaffected by circumcenters that fall on cell edges.
    const int first = static_cast<int>(std::min_element(k.begin(), k.end()) - k.begin());
    if (s[first][0] != 0 || s[first][1] != 0) continue;
    mesh.triangles.push_back(k);
    mesh.shifts.push_back(s);
  }

  if (mesh.triangles.size() != 2 * n)
    throw MeshGapError("periodic mesh has " + std::to_string(mesh.triangles.size()) +
                       " triangles, expected " + std::to_string(2 * n));
  const double area = mesh.total_area();
  if (std::abs(area - lx * ly) > 1e-8 * lx * ly)
    throw MeshGapError("periodic mesh covers area " + io::format_double(area) +
                       " instead of " + io::format_double(lx * ly));
  std::vector<char> used(n, 0);
  for (const auto& tri : mesh.triangles)
    for (int k : tri) used[k] = 1;
  for (std::size_t k = 0; k < n; ++k)
    if (!used[k]) throw MeshGapError("node " + std::to_string(k) + " belongs to no triangle");
  return mesh;
}

}  // namespace

SliceMesh triangulate_slice(std::span<const Vec2> points, const DomainSpec& domain) {
  domain.validate();
  if (domain.periodic()) {
    std::vector<Vec2> wrapped;
    wrapped.reserve(points.size());
    for (const Vec2& p : points) wrapped.push_back(domain.wrap(p));
    reject_collinear(wrapped);
    return triangulate_torus(wrapped, domain);
  }
  reject_collinear(points);
  return triangulate_box(points, domain);
}

SliceOperators assemble_slice(const SliceMesh& mesh) {
  const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
  std::vector<Eigen::Triplet<double>> mass, stiff;
  mass.reserve(6 * mesh.triangles.size());
  stiff.reserve(6 * mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec2 p[3] = {mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2)};
    const double area = 0.5 * cross(p[1] - p[0], p[2] - p[0]);
    Vec2 e[3];
    double longest = 0.0;
    for (int i = 0; i < 3; ++i) {
      e[i] = p[(i + 2) % 3] - p[(i + 1) % 3];
      longest = std::max(longest, dot(e[i], e[i]));
    }
    if (!(area > 1e-14 * longest))
      throw ZeroAreaTriangle("triangle " + std::to_string(t) + " has area " +
                             io::format_double(area));
    double k[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) k[i][j] = dot(e[i], e[j]) / (4.0 * area);
    // Diagonal from the off-diagonal entries keeps the row sums at zero.
    for (int i = 0; i < 3; ++i) k[i][i] = -(k[i][(i + 1) % 3] + k[i][(i + 2) % 3]);

    const auto& v = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (v[i] > v[j]) continue;
        mass.emplace_back(v[i], v[j], area / 12.0 * (i == j ? 2.0 : 1.0));
        stiff.emplace_back(v[i], v[j], -k[i][j]);
      }
  }
  SparseMatrix mu(n, n), su(n, n);
  mu.setFromTriplets(mass.begin(), mass.end());
  su.setFromTriplets(stiff.begin(), stiff.end());
  SliceOperators ops;
  ops.mass = mu.selfadjointView<Eigen::Upper>();
  ops.stiffness = su.selfadjointView<Eigen::Upper>();
  ops.mass.makeCompressed();
  ops.stiffness.makeCompressed();
  return ops;
}

std::vector<SliceOperators> assemble_all_slices(const TrajectoryEnsemble& ensemble,
                                                std::size_t threads) {
  std::vector<SliceOperators> out(ensemble.num_times());
  parallel_for(out.size(), worker_count(threads), [&](std::size_t i) {
    try {
      out[i] = assemble_slice(triangulate_slice(ensemble.slice(i), ensemble.domain()));
    } catch (const DegenerateCloud& e) {
      throw DegenerateCloud("slice " + std::to_string(i) + ": " + e.what());
    } catch (const MeshGapError& e) {
      throw MeshGapError("slice " + std::to_string(i) + ": " + e.what());
    } catch (const ZeroAreaTriangle& e) {
      throw ZeroAreaTriangle("slice " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

DynamicPencil assemble_dynamic_laplacian(std::span<const SliceOperators> slices,
                                         std::span<const double> times, DynamicMass mass) {
  if (slices.size() < 2) throw DomainError("dynamic Laplacian needs at least two slices");
  if (times.size() != slices.size())
    throw DomainError("one time per slice required for the dynamic Laplacian");
  const double tau = times.back() - times.front();
  DynamicPencil out;
  out.stiffness = SparseMatrix(slices[0].stiffness.rows(), slices[0].stiffness.cols());
  out.mass = SparseMatrix(slices[0].mass.rows(), slices[0].mass.cols());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    double w = 0.0;
    if (i > 0) w += 0.5 * (times[i] - times[i - 1]);
    if (i + 1 < slices.size()) w += 0.5 * (times[i + 1] - times[i]);
    w /= tau;
    out.stiffness += w * slices[i].stiffness;
    if (mass == DynamicMass::time_averaged) out.mass += w * slices[i].mass;
  }
  if (mass == DynamicMass::initial) out.mass = slices[0].mass;
  out.stiffness.makeCompressed();
  out.mass.makeCompressed();
  return out;
}

namespace {

void write_matrix(std::ostream& out, const SparseMatrix& m) {
  out << m.rows() << ' ' << m.nonZeros() << '\n';
  for (Eigen::Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << io::format_double(it.value()) << '\n';
}

// Whitespace-separated numeric tokens of a cache file.
class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  template <class T>
  bool next(T& value) {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || (ptr < last && !std::isspace(static_cast<unsigned char>(*ptr))))
      return false;
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return true;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

SparseMatrix read_matrix(TokenReader& in, const std::string& where) {
  long long n = 0, nnz = 0;
  if (!in.next(n) || !in.next(nnz) || n <= 0 || nnz < 0)
    throw ParseError(where + ": bad matrix header");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    long long r = 0, c = 0;
    double v = 0.0;
    if (!in.next(r) || !in.next(c) || !in.next(v) || !std::isfinite(v) || r < 0 || c < 0 ||
        r >= n || c >= n)
      throw ParseError(where + ": bad triplet " + std::to_string(k));
    trip.emplace_back(r, c, v);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

std::string slice_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slice_%04zu.txt", i);
  return buf;
}

}  // namespace

void save_slice_cache(const std::filesystem::path& dir, std::span<const SliceOperators> slices,
                      std::uint64_t fingerprint) {
  std::filesystem::create_directories(dir);
  json index;
  index["fingerprint"] = std::to_string(fingerprint);
  index["slices"] = json::array();
  for (std::size_t i = 0; i < slices.size(); ++i) {
    std::ostringstream out;
    write_matrix(out, slices[i].mass);
    write_matrix(out, slices[i].stiffness);
    io::write_text(dir / slice_file_name(i), out.str());
    index["slices"].push_back(slice_file_name(i));
  }
  io::write_text(dir / "index.json", index.dump(2) + "\n");
}

bool load_slice_cache(const std::filesystem::path& dir, std::uint64_t fingerprint,
                      std::vector<SliceOperators>& slices) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path)) return false;
  json index;
  try {
    index = json::parse(io::read_text(index_path));
    if (index.at("fingerprint").get<std::string>() != std::to_string(fingerprint)) return false;
  } catch (const json::exception&) {
    return false;
  }
  std::vector<SliceOperators> out;
  for (const auto& name : index.at("slices")) {
    const auto path = dir / name.get<std::string>();
    const std::string text = io::read_text(path);
    TokenReader in(text);
    SliceOperators ops;
    ops.mass = read_matrix(in, path.string());
    ops.stiffness = read_matrix(in, path.string());
    out.push_back(std::move(ops));
  }
  slices = std::move(out);
  return true;
}

std::uint64_t ensemble_fingerprint(const TrajectoryEnsemble& ensemble) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const int kind = static_cast<int>(ensemble.domain().kind);
  mix(&kind, sizeof kind);
  mix(ensemble.domain().extents.data(), 2 * sizeof(double));
  mix(ensemble.times().data(), ensemble.times().size() * sizeof(double));
  mix(ensemble.positions().data(), ensemble.positions().size() * sizeof(Vec2));
  return h;
}

}  // namespace coherence
