#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "coherence/errors.hpp"
#include "coherence/fem.hpp"

using namespace coherence;
using std::numbers::pi;

namespace {

Eigen::MatrixXd dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

std::vector<Vec2> lattice(int m, double l) {
  std::vector<Vec2> p;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) p.push_back({i * l / m, j * l / m});
  return p;
}

// Smallest nonzero eigenvalue of (-D, M) by dense generalized eigensolve.
double first_nonzero(const SparseMatrix& d, const SparseMatrix& m) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(-dense(d), dense(m));
  return es.eigenvalues()(1);
}

}  // namespace

TEST_CASE("square corners in a box") {
  std::vector<Vec2> p{{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}};
  const auto mesh = triangulate_slice(p, DomainSpec::box(2, 2));
  CHECK(mesh.triangles.size() == 2);
  CHECK(mesh.total_area() == doctest::Approx(1.0));
}

TEST_CASE("P1 element on the unit right triangle") {
  std::vector<Vec2> p{{0, 0}, {1, 0}, {0, 1}};
  SliceMesh mesh;
  mesh.domain = DomainSpec::box(1, 1);
  mesh.nodes = p;
  mesh.triangles = {{0, 1, 2}};
  const auto ops = assemble_slice(mesh);
  Eigen::Matrix3d mass_ref;
  mass_ref << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  mass_ref /= 24.0;
  CHECK((dense(ops.mass) - mass_ref).norm() < 1e-15);
  Eigen::Matrix3d stiff_ref;  // gradients (-1,-1), (1,0), (0,1) over area 1/2
  stiff_ref << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
  CHECK((dense(ops.stiffness) + stiff_ref).norm() < 1e-15);
  CHECK((dense(ops.stiffness) * Eigen::Vector3d::Ones()).norm() < 1e-15);

  mesh.nodes[2] = {2, 0};
  CHECK_THROWS_AS(assemble_slice(mesh), ZeroAreaTriangle);
}

TEST_CASE("uniform lattice on the torus") {
  const int m = 10;
  const double l = 2 * pi;
  const auto mesh = triangulate_slice(lattice(m, l), DomainSpec::torus(l, l));
  REQUIRE(mesh.triangles.size() == std::size_t(2 * m * m));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    CHECK(mesh.signed_area(t) == doctest::Approx(l * l / (2 * m * m)).epsilon(1e-12));
  CHECK(mesh.total_area() == doctest::Approx(l * l).epsilon(1e-12));
}

TEST_CASE("random torus clouds cover the cell once") {
  std::mt19937_64 rng(17);
  for (double lx : {2 * pi, 3.0}) {
    const double ly = 2.0;
    std::uniform_real_distribution<double> ux(0.0, lx), uy(0.0, ly);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<Vec2> p(200);
      for (auto& q : p) q = {ux(rng), uy(rng)};
      const auto mesh = triangulate_slice(p, DomainSpec::torus(lx, ly));
      CHECK(std::abs(mesh.total_area() - lx * ly) <= 1e-8 * lx * ly);
      std::set<int> used;
      for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        CHECK(mesh.signed_area(t) > 0);
        used.insert(mesh.triangles[t].begin(), mesh.triangles[t].end());
      }
      CHECK(used.size() == p.size());
    }
  }
}

TEST_CASE("operator invariants on a random torus mesh") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 2 * pi);
  std::vector<Vec2> p(150);
  for (auto& q : p) q = {u(rng), u(rng)};
  const auto ops = assemble_slice(triangulate_slice(p, DomainSpec::torus(2 * pi, 2 * pi)));
  const Eigen::MatrixXd m = dense(ops.mass), d = dense(ops.stiffness);
  CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d * Eigen::VectorXd::Ones(150)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Eigen::VectorXd::Ones(150).dot(m * Eigen::VectorXd::Ones(150)) ==
        doctest::Approx(4 * pi * pi).epsilon(1e-12));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m), ed(d);
  CHECK(em.eigenvalues().minCoeff() > 0.0);
  CHECK(ed.eigenvalues().maxCoeff() < 1e-10);
  // Pattern within mesh adjacency.
  const auto mesh = triangulate_slice(p, DomainSpec::torus(2 * pi, 2 * pi));
  std::set<std::pair<int, int>> adj;
  for (const auto& t : mesh.triangles)
    for (int a : t)
      for (int b : t) adj.insert({a, b});
  for (int k = 0; k < ops.mass.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(ops.mass, k); it; ++it)
      CHECK(adj.count({int(it.row()), int(it.col())}) == 1);
}

TEST_CASE("torus Laplacian eigenvalue converges to 4 pi^2 / l^2") {
  const double l = 2 * pi;
  double previous_error = 1.0;
  for (int m : {15, 25, 35}) {
    const auto ops = assemble_slice(triangulate_slice(lattice(m, l), DomainSpec::torus(l, l)));
    const double lambda = first_nonzero(ops.stiffness, ops.mass);
    const double error = std::abs(lambda - 4 * pi * pi / (l * l));
    CHECK(error < previous_error);
    previous_error = error;
    if (m == 35) CHECK(error < 0.02);
  }
}

TEST_CASE("identity flow gives identical slices and the static spectrum") {
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto times = uniform_times(0.0, 1.0, 4);
  const auto e = integrate_trajectories(ChildressSowardSchedule::constant(0.0, 0.0, 0.0, 1.0),
                                        domain, SeedGrid{35, 35}, times);
  const auto slices = assemble_all_slices(e);
  REQUIRE(slices.size() == 4);
  for (const auto& s : slices) {
    CHECK((dense(s.mass) - dense(slices[0].mass)).norm() == 0.0);
    CHECK((dense(s.stiffness) - dense(slices[0].stiffness)).norm() == 0.0);
  }
  const auto pencil = assemble_dynamic_laplacian(slices, times);
  CHECK(-first_nonzero(pencil.stiffness, pencil.mass) == doctest::Approx(-1.0).epsilon(0.02));
}

TEST_CASE("two identical slices average to themselves") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> p(40);
  for (auto& q : p) q = {u(rng), u(rng)};
  const auto ops = assemble_slice(triangulate_slice(p, DomainSpec::torus(1, 1)));
  std::vector<SliceOperators> slices{ops, ops};
  const std::vector<double> times{0.0, 0.7};
  for (auto rule : {DynamicMass::time_averaged, DynamicMass::initial}) {
    const auto pencil = assemble_dynamic_laplacian(slices, times, rule);
    CHECK((dense(pencil.stiffness) - dense(ops.stiffness)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((dense(pencil.mass) - dense(ops.mass)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("slice masses keep the total area along the flow") {
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto e = integrate_trajectories(ChildressSowardSchedule::partially_coherent(), domain,
                                        SeedGrid{20, 20}, uniform_times(-1, 1, 21));
  const auto slices = assemble_all_slices(e);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(400);
  for (const auto& s : slices) {
    CHECK(one.dot(s.mass * one) == doctest::Approx(4 * pi * pi).epsilon(1e-8));
    // Mixing slices contain slivers with entries ~1e7, so the kernel
    // residual is bounded relative to the largest entry.
    const double scale = std::max(1.0, Eigen::MatrixXd(s.stiffness).cwiseAbs().maxCoeff());
    CHECK((s.stiffness * one).cwiseAbs().maxCoeff() < 1e-12 * scale);
  }

  // A bump on one vortex cell keeps a small Rayleigh quotient while the
  // vortices are intact and loses it once the shears start mixing.
  Eigen::VectorXd f(400);
  for (std::size_t n = 0; n < 400; ++n) {
    const Vec2 q = e.position(0, n);
    f(n) = (q.x < pi && q.y < pi) ? std::sin(q.x) * std::sin(q.y) : 0.0;
  }
  std::vector<double> rq;
  for (const auto& s : slices) rq.push_back(-f.dot(s.stiffness * f) / f.dot(s.mass * f));
  for (std::size_t i = 0; i <= 5; ++i) CHECK(rq[i] < 1.2 * rq[0]);
  CHECK(rq.back() > 5.0 * rq[0]);
}

TEST_CASE("slice errors carry the slice index") {
  const auto domain = DomainSpec::torus(10, 10);
  std::vector<Vec2> pos;
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 9; ++n)
      pos.push_back(i == 1 ? Vec2{double(n), 0.0} : Vec2{double(n % 3) * 3, double(n / 3) * 3});
  std::vector<std::int64_t> ids(9);
  for (int n = 0; n < 9; ++n) ids[n] = n;
  TrajectoryEnsemble e(domain, {0.0, 1.0, 2.0}, ids, pos);
  try {
    assemble_all_slices(e);
    FAIL("expected DegenerateCloud");
  } catch (const DegenerateCloud& err) {
    CHECK(std::string(err.what()).find("slice 1") != std::string::npos);
  }
}

TEST_CASE("slice cache round trip") {
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto e = integrate_trajectories(ChildressSowardSchedule::partially_coherent(), domain,
                                        SeedGrid{8, 8}, uniform_times(-1, 1, 5));
  const auto slices = assemble_all_slices(e);
  const auto dir = std::filesystem::temp_directory_path() / "coherence_test_fem_cache";
  std::filesystem::remove_all(dir);
  const auto fp = ensemble_fingerprint(e);
  save_slice_cache(dir, slices, fp);
  std::vector<SliceOperators> back;
  CHECK_FALSE(load_slice_cache(dir, fp + 1, back));
  REQUIRE(load_slice_cache(dir, fp, back));
  REQUIRE(back.size() == slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    CHECK((dense(back[i].mass) - dense(slices[i].mass)).norm() == 0.0);
    CHECK((dense(back[i].stiffness) - dense(slices[i].stiffness)).norm() == 0.0);
  }
}

TEST_CASE("degenerate clouds") {
  std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(triangulate_slice(line, DomainSpec::box(5, 5)), DegenerateCloud);
  CHECK_THROWS_AS(triangulate_slice(line, DomainSpec::torus(5, 5)), DegenerateCloud);
}
