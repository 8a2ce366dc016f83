#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "coherence/errors.hpp"
#include "coherence/surrogate.hpp"

using namespace coherence;
using std::numbers::pi;

namespace {

SurrogateProblem example() {
  SurrogateProblem s;
  s.z = 2.0;
  s.Z = 40.0;
  s.p = 0.25;
  s.a = std::sqrt(2.0) / pi;  // a^2 / 2 = 1 / pi^2
  return s;
}

}  // namespace

TEST_CASE("characteristic function") {
  const auto s = example();
  const double wZ = std::sqrt(2.0 * (s.Z - s.z)) / s.a;
  CHECK(characteristic(s, -s.z) == doctest::Approx(std::tanh(wZ * (1 - s.p))));
  CHECK(characteristic(s, -s.z) > 0.0);

  // First pole at -z - (a^2/2)(pi / 2p)^2 = -2 - 4 = -6.
  const auto poles = surrogate_singularities(s, -s.Z);
  REQUIRE_FALSE(poles.empty());
  CHECK(poles[0] == doctest::Approx(-6.0));
  for (std::size_t k = 1; k < poles.size(); ++k) CHECK(poles[k] < poles[k - 1]);
  CHECK(poles.back() > -s.Z);
  for (double nu : poles) CHECK_THROWS_AS(characteristic(s, nu), SingularityHit);
  CHECK(characteristic(s, poles[0] + 1e-9) < -1e6);
  CHECK(characteristic(s, poles[0] - 1e-9) > 1e6);

  // With the first pole below -Z, f falls to -infinity at -Z.
  auto wide = s;
  wide.a = std::sqrt(2.0);
  CHECK(surrogate_singularities(wide, -wide.Z).empty());
  CHECK(characteristic(wide, -wide.Z + 1e-10) < -1e3);
  CHECK(characteristic(wide, -wide.Z + 1e-12) < characteristic(wide, -wide.Z + 1e-10));
  CHECK_THROWS_AS(characteristic(wide, -wide.Z), DomainError);
}

TEST_CASE("dominant eigenvalue and profile") {
  const auto s = example();
  const auto sol = solve_dominant(s);
  CHECK(sol.nu0 > -6.0);
  CHECK(sol.nu0 < -2.0);
  CHECK(std::abs(characteristic(s, sol.nu0)) < 1e-9);

  const double p = s.p;
  CHECK(std::abs(sol(p * (1 - 1e-15)) - sol(p * (1 + 1e-15))) < 1e-10);
  CHECK(std::abs(sol.derivative(p * (1 - 1e-15)) - sol.derivative(p * (1 + 1e-15))) < 1e-10);
  double top = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double v = sol(i / 1000.0);
    CHECK(v >= 0.0);
    top = std::max(top, v);
  }
  CHECK(top == doctest::Approx(1.0));

  // FD oracle.
  const auto fd = solve_fd(s, 1000);
  CHECK(fd.eigenvalues[0] == doctest::Approx(sol.nu0).epsilon(1e-3));
  // Lower analytic roots match lower FD eigenvalues.
  REQUIRE_FALSE(sol.lower.empty());
  for (std::size_t k = 0; k < sol.lower.size(); ++k)
    CHECK(fd.eigenvalues[static_cast<Eigen::Index>(k + 1)] ==
          doctest::Approx(sol.lower[k]).epsilon(1e-3));
}

TEST_CASE("limits of the dominant eigenvalue") {
  auto s = example();
  s.p = 1e-3;
  CHECK(solve_dominant(s).nu0 == doctest::Approx(-s.Z).epsilon(1e-2));
  s = example();
  s.a = 1e-3;
  CHECK(solve_dominant(s).nu0 == doctest::Approx(-s.z).epsilon(1e-2));
}

TEST_CASE("smaller a gives a sharper transition") {
  auto s = example();
  const double fast = solve_dominant(s).omega_Z;
  s.a *= 0.5;
  CHECK(solve_dominant(s).omega_Z > fast);
}

TEST_CASE("one root between consecutive poles") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    SurrogateProblem s;
    s.z = 0.5 + 3 * u(rng);
    s.Z = s.z + 5 + 60 * u(rng);
    s.p = 0.05 + 0.9 * u(rng);
    s.a = 0.05 + 0.6 * u(rng);
    const auto poles = surrogate_singularities(s, -s.Z);
    std::vector<double> ends{-s.z};
    ends.insert(ends.end(), poles.begin(), poles.end());
    for (std::size_t k = 0; k + 1 < ends.size(); ++k) {
      const double hi = ends[k], lo = ends[k + 1];
      int changes = 0;
      double prev = 0.0;
      for (int i = 1; i < 2000; ++i) {
        const double nu = lo + (hi - lo) * i / 2000.0;
        const double f = characteristic(s, nu);
        if (i > 1 && (f > 0) != (prev > 0)) ++changes;
        prev = f;
      }
      CHECK(changes == 1);
    }
  }
}

TEST_CASE("finite differences") {
  SUBCASE("constant rate") {
    SurrogateProblem s;
    s.z = s.Z = 3.0;
    s.a = 0.8;
    s.p = 0.3;
    const auto fd = solve_fd(s, 400);
    CHECK(fd.eigenvalues[0] == doctest::Approx(-3.0).epsilon(1e-10));
    for (int k = 1; k < 4; ++k) {
      const double exact = -3.0 - 0.32 * (k * pi) * (k * pi);
      CHECK(fd.eigenvalues[k] == doctest::Approx(exact).epsilon(1e-4));
    }
  }

  SUBCASE("dominant vector keeps its sign") {
    const auto fd = solve_fd(example(), 300);
    const auto v = fd.eigenvectors.col(0);
    CHECK((v.array() * v[0] > 0.0).all());
  }

  SUBCASE("second-order convergence to the analytic eigenvalue") {
    const auto s = example();
    const double nu = solve_dominant(s).nu0;
    std::vector<double> logs_n, logs_e;
    for (std::size_t n : {250u, 500u, 1000u, 2000u}) {
      logs_n.push_back(std::log(double(n)));
      logs_e.push_back(std::log(std::abs(solve_fd(s, n, false).eigenvalues[0] - nu)));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 4; ++i) mx += logs_n[i] / 4, my += logs_e[i] / 4;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < 4; ++i)
      sxy += (logs_n[i] - mx) * (logs_e[i] - my), sxx += (logs_n[i] - mx) * (logs_n[i] - mx);
    CHECK(sxy / sxx == doctest::Approx(-2.0).epsilon(0.15));
  }
}

TEST_CASE("rescaling to tau") {
  const auto s = example();
  const auto same = rescale_to_tau(s, 1.0);
  CHECK(same.a == s.a);
  CHECK(same.tau == 1.0);
  const auto stretched = rescale_to_tau(s, 2.0);
  CHECK(stretched.a == doctest::Approx(2 * s.a));
  const auto unit = solve_dominant(s);
  const auto wide = solve_dominant(stretched);
  CHECK(wide.nu0 == doctest::Approx(unit.nu0).epsilon(1e-12));
  CHECK(wide(1.0) == doctest::Approx(unit(0.5)));
  CHECK(solve_fd(stretched, 1000, false).eigenvalues[0] == doctest::Approx(unit.nu0).epsilon(1e-3));
}

TEST_CASE("profile fit") {
  const auto sol = solve_dominant(example());
  std::vector<double> t, u;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(-1.0 + i / 50.0);
    u.push_back(sol(i / 100.0));
  }
  const auto fit = fit_profile(t, u);
  CHECK(std::abs(fit.p_hat - 0.25) <= 0.01);
  CHECK(fit.r2_cosine > 0.99);
  CHECK(fit.r2_decay > 0.9);

  const std::vector<double> flat(20, 2.0), ft(t.begin(), t.begin() + 20);
  CHECK_THROWS_AS(fit_profile(ft, flat), FitDegenerate);
  CHECK_THROWS_AS(fit_profile(std::span(t).first(5), std::span(u).first(5)), FitDegenerate);
}
