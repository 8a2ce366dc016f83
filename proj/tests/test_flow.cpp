#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "coherence/errors.hpp"
#include "coherence/flow.hpp"
#include "coherence/io.hpp"

using namespace coherence;
using std::numbers::pi;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("coherence_test_flow_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TrajectoryEnsemble small_ensemble() {
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto times = uniform_times(-1.0, 1.0, 6);
  return integrate_trajectories(ChildressSowardSchedule::partially_coherent(), domain,
                                SeedGrid{4, 4}, times);
}

}  // namespace

TEST_CASE("velocity at the vortex centre vanishes") {
  const Vec2 v = childress_soward_velocity(1.0, 0.0, {pi / 2, pi / 2});
  CHECK(std::abs(v.x) < 1e-15);
  CHECK(std::abs(v.y) < 1e-15);
}

TEST_CASE("r = 1 is a diagonal shear") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2 * pi);
  for (int i = 0; i < 20; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 v = childress_soward_velocity(1.0, 1.0, p);
    CHECK(v.x == doctest::Approx(std::sin(p.x - p.y)));
    CHECK(v.y == doctest::Approx(std::sin(p.x - p.y)));
    const Vec2 w = childress_soward_velocity(1.0, 1.0, p + Vec2{0.3, 0.3});
    CHECK(w.x == doctest::Approx(v.x));
  }
}

TEST_CASE("velocity is the rotated gradient of the stream function") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2 * pi), ur(-1.0, 1.0);
  const double h = 1e-6;
  for (int i = 0; i < 20; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const double r = ur(rng);
    const Vec2 v = childress_soward_velocity(2.0, r, p);
    const double psi_y = (childress_soward_streamfunction(r, p + Vec2{0, h}) -
                          childress_soward_streamfunction(r, p - Vec2{0, h})) / (2 * h);
    const double psi_x = (childress_soward_streamfunction(r, p + Vec2{h, 0}) -
                          childress_soward_streamfunction(r, p - Vec2{h, 0})) / (2 * h);
    CHECK(v.x == doctest::Approx(2.0 * psi_y).epsilon(1e-7));
    CHECK(v.y == doctest::Approx(-2.0 * psi_x).epsilon(1e-7));
  }
}

TEST_CASE("cat's-eye topology at r = 0.5") {
  // Superlevel set {psi > 0.6} splits into separate eyes; count connected
  // components on a grid of one period.
  const int n = 200;
  std::vector<int> label(n * n, -1);
  auto inside = [&](int i, int j) {
    return childress_soward_streamfunction(0.5, {2 * pi * i / n, 2 * pi * j / n}) > 0.6;
  };
  int components = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (!inside(i, j) || label[j * n + i] >= 0) continue;
      std::vector<std::pair<int, int>> stack{{i, j}};
      label[j * n + i] = components;
      while (!stack.empty()) {
        auto [a, b] = stack.back();
        stack.pop_back();
        const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int x = (a + di[k] + n) % n, y = (b + dj[k] + n) % n;
          if (inside(x, y) && label[y * n + x] < 0) {
            label[y * n + x] = components;
            stack.push_back({x, y});
          }
        }
      }
      ++components;
    }
  // psi = 0.75 cos(x - y) - 0.25 cos(x + y): maxima at x - y = 0, x + y = pi
  // mod 2 pi, i.e. two eyes per period cell, elongated along the diagonal.
  CHECK(components == 2);
  CHECK(inside(n / 4, n / 4));        // (pi/2, pi/2) lies in an eye
  CHECK(!inside(0, 0));               // (0, 0) is a saddle region
}

TEST_CASE("divergence vanishes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 2 * pi), ut(-1.0, 1.0);
  const auto schedule = ChildressSowardSchedule::partially_coherent();
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const double t = ut(rng);
    const double a = schedule.at(t).amplitude;
    const double div = (evaluate_velocity(schedule, t, p + Vec2{h, 0}).x -
                        evaluate_velocity(schedule, t, p - Vec2{h, 0}).x +
                        evaluate_velocity(schedule, t, p + Vec2{0, h}).y -
                        evaluate_velocity(schedule, t, p - Vec2{0, h}).y) / (2 * h);
    CHECK(std::abs(div) < 1e-6 * a);
  }
}

TEST_CASE("schedule of the partially coherent example") {
  const auto s = ChildressSowardSchedule::partially_coherent();
  CHECK(s.at(-1.0).shear == 0.0);
  CHECK(s.at(-0.75).shear == 0.0);
  CHECK(s.at(-0.5).shear == 0.0);
  CHECK(s.at(-0.4).shear == 1.0);   // cos(-2 pi) = 1
  CHECK(s.at(-0.2).shear == -1.0);  // cos(-pi) = -1
  CHECK(s.at(0.0).shear == 1.0);
  CHECK(s.at(0.95).shear == -1.0);
  CHECK(s.at(-0.75).amplitude == 40.0);
  CHECK(s.at(0.0).amplitude == 30.0);
  const auto o = ChildressSowardSchedule::partially_coherent(
      ChildressSowardSchedule::AmplitudeReading::overlap);
  CHECK(o.at(-0.75).amplitude == 40.0);
  CHECK(o.at(0.0).amplitude == 70.0);
  CHECK(o.at(0.75).amplitude == 30.0);
}

TEST_CASE("zero amplitude is the identity flow") {
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto times = uniform_times(0.0, 1.0, 5);
  const auto e = integrate_trajectories(ChildressSowardSchedule::constant(0.0, 0.3, 0.0, 1.0),
                                        domain, SeedGrid{5, 5}, times);
  for (std::size_t i = 0; i < e.num_times(); ++i)
    for (std::size_t n = 0; n < e.num_trajectories(); ++n)
      CHECK(e.position(i, n) == e.position(0, n));
}

TEST_CASE("trajectory i starts at seed i and stays wrapped") {
  const auto e = small_ensemble();
  const auto seeds = SeedGrid{4, 4}.points(e.domain());
  for (std::size_t n = 0; n < seeds.size(); ++n) CHECK(e.position(0, n) == seeds[n]);
  for (const Vec2& p : e.positions()) {
    CHECK(p.x >= 0.0);
    CHECK(p.x < 2 * pi);
    CHECK(p.y >= 0.0);
    CHECK(p.y < 2 * pi);
  }
}

TEST_CASE("r = 1 shear conserves x - y") {
  const auto s = ChildressSowardSchedule::constant(3.0, 1.0);
  const auto times = uniform_times(-1.0, 1.0, 11);
  const auto path = integrate_path(s, {0.4, 2.1}, times, 20);
  for (const Vec2& p : path) CHECK(p.x - p.y == doctest::Approx(0.4 - 2.1).epsilon(1e-13));
}

TEST_CASE("transported area element is preserved") {
  // Central-difference Jacobian determinant of the flow map. After t = 0 the
  // mixing epochs stretch by ~1e6 per axis and no finite stencil resolves it.
  const auto s = ChildressSowardSchedule::partially_coherent();
  const auto times = uniform_times(-1.0, 1.0, 101);
  const Vec2 base{1.0, 1.3};
  for (std::size_t substeps : {std::size_t{20}, std::size_t{80}}) {
    const double eps = 1e-7;
    const Vec2 stencil[4] = {base + Vec2{eps, 0}, base - Vec2{eps, 0}, base + Vec2{0, eps},
                             base - Vec2{0, eps}};
    std::vector<std::vector<Vec2>> p;
    for (const Vec2& c : stencil) p.push_back(integrate_path(s, c, times, substeps));
    for (std::size_t i = 0; i < times.size() && times[i] <= 1e-12; ++i) {
      const double det = cross(p[0][i] - p[1][i], p[2][i] - p[3][i]) / (4 * eps * eps);
      CHECK(std::abs(det - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("integration is deterministic") {
  const auto a = small_ensemble();
  const auto b = small_ensemble();
  REQUIRE(a.positions().size() == b.positions().size());
  for (std::size_t k = 0; k < a.positions().size(); ++k) CHECK(a.positions()[k] == b.positions()[k]);
}

TEST_CASE("save and load round trip is bit-identical") {
  const auto e = small_ensemble();
  const auto manifest = save_trajectories(e, scratch_dir("roundtrip"));
  const auto back = load_trajectories(manifest);
  CHECK(back.domain().kind == e.domain().kind);
  REQUIRE(back.num_times() == e.num_times());
  for (std::size_t i = 0; i < e.num_times(); ++i) CHECK(back.times()[i] == e.times()[i]);
  for (std::size_t k = 0; k < e.positions().size(); ++k) CHECK(back.positions()[k] == e.positions()[k]);
  CHECK(back.wrapped_on_load == 0);
}

namespace {

// Rewrites the data file of a saved ensemble through `edit`.
std::filesystem::path edited_copy(const std::string& name,
                                  const std::function<std::string(const std::string&)>& edit) {
  const auto manifest = save_trajectories(small_ensemble(), scratch_dir(name));
  const auto csv = manifest.parent_path() / "trajectories.csv";
  io::write_text(csv, edit(io::read_text(csv)));
  return manifest;
}

}  // namespace

TEST_CASE("NaN coordinate is rejected with its row") {
  const auto manifest = edited_copy("nan", [](const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
      if (row == 3) line = line.substr(0, line.rfind(',')) + ",nan";
      out << line << '\n';
      ++row;
    }
    return out.str();
  });
  try {
    load_trajectories(manifest);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("missing sample is a gap") {
  const auto manifest = edited_copy("gap", [](const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("5,3,", 0) != 0) out << line << '\n';
    return out.str();
  });
  try {
    load_trajectories(manifest);
    FAIL("expected GapError");
  } catch (const GapError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("trajectory 5") != std::string::npos);
    CHECK(msg.find("time index 3") != std::string::npos);
  }
}

TEST_CASE("missing column and row order") {
  const auto manifest = edited_copy("schema", [](const std::string& text) {
    return "traj_id,time_index,x,z" + text.substr(text.find('\n'));
  });
  CHECK_THROWS_AS(load_trajectories(manifest), SchemaError);

  // Reversed rows and swapped columns load to the same ensemble.
  const auto e = small_ensemble();
  const auto m2 = edited_copy("order", [](const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
      const auto f = io::split_csv_line(line);
      rows.push_back(f[2] + "," + f[3] + "," + f[1] + "," + f[0]);
    }
    std::string out = "x,y,time_index,traj_id\n";
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) out += *it + "\n";
    return out;
  });
  const auto back = load_trajectories(m2);
  for (std::size_t k = 0; k < e.positions().size(); ++k) CHECK(back.positions()[k] == e.positions()[k]);
}

TEST_CASE("torus points outside the cell are wrapped on load") {
  const auto manifest = edited_copy("wrap", [](const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    std::getline(in, line);
    out << line << '\n';
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        const auto f = io::split_csv_line(line);
        double x = 0;
        io::parse_double(f[2], x);
        line = f[0] + "," + f[1] + "," + io::format_double(x + 2 * pi) + "," + f[3];
        first = false;
      }
      out << line << '\n';
    }
    return out.str();
  });
  const auto e = load_trajectories(manifest);
  CHECK(e.wrapped_on_load == 1);
  for (const Vec2& p : e.positions()) CHECK(p.x < 2 * pi);
}
