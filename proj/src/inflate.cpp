#include "coherence/inflate.hpp"

#include <cmath>
#include <functional>

#include "coherence/errors.hpp"

namespace coherence {

void require_uniform_grid(std::span<const double> times) {
  if (times.size() < 2) throw NonuniformGrid("need at least two time instances");
  const double h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    if (std::abs(step - h) > 1e-9 * std::abs(h))
      throw NonuniformGrid("time step " + std::to_string(i) + " deviates from the uniform grid");
  }
}

std::vector<SparseMatrix> slice_masses(std::span<const SliceOperators> slices, SliceMass mass) {
  std::vector<SparseMatrix> out;
  out.reserve(slices.size());
  for (const auto& s : slices) out.push_back(mass == SliceMass::initial ? slices[0].mass : s.mass);
  return out;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void add_block(Triplets& out, const SparseMatrix& block, std::size_t row0, std::size_t col0) {
  for (Eigen::Index c = 0; c < block.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(block, c); it; ++it)
      out.emplace_back(static_cast<Eigen::Index>(row0) + it.row(),
                       static_cast<Eigen::Index>(col0) + it.col(), it.value());
}

// Block-tridiagonal matrix from per-slice matrices X_i:
//   first diagonal  d * (e X_0 + X_1)
//   interior        d * (X_{i-1} + m X_i + X_{i+1})
//   last diagonal   d * (X_{T-1} + e X_T)
//   off-diagonal    o * (X_i + X_{i+1}), mirrored below the diagonal.
SparseMatrix tridiagonal(std::span<const SliceOperators> slices,
                         const std::function<const SparseMatrix&(const SliceOperators&)>& pick,
                         double d, double e, double m, double o) {
  const std::size_t T = slices.size() - 1;
  const std::size_t n = static_cast<std::size_t>(pick(slices[0]).rows());
  Triplets trip;
  for (std::size_t i = 0; i <= T; ++i) {
    SparseMatrix diag;
    if (i == 0)
      diag = d * (e * pick(slices[0]) + pick(slices[1]));
    else if (i == T)
      diag = d * (pick(slices[T - 1]) + e * pick(slices[T]));
    else
      diag = d * (pick(slices[i - 1]) + m * pick(slices[i]) + pick(slices[i + 1]));
    add_block(trip, diag, i * n, i * n);
    if (i < T) {
      const SparseMatrix off = o * (pick(slices[i]) + pick(slices[i + 1]));
      add_block(trip, off, i * n, (i + 1) * n);
      add_block(trip, off, (i + 1) * n, i * n);
    }
  }
  const auto dim = static_cast<Eigen::Index>((T + 1) * n);
  SparseMatrix out(dim, dim);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

}  // namespace

std::shared_ptr<const InflatedBase> build_inflated_base(std::span<const SliceOperators> slices,
                                                        double tau, SliceMass mass_choice) {
  if (slices.size() < 2) throw DomainError("inflated pencil needs at least two slices");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be positive");
  const auto n = slices[0].mass.rows();
  for (const auto& s : slices)
    if (s.mass.rows() != n || s.stiffness.rows() != n)
      throw DomainError("slice operators differ in size");

  auto base = std::make_shared<InflatedBase>();
  base->num_slices = slices.size();
  base->num_nodes = static_cast<std::size_t>(n);
  base->tau = tau;
  base->h = tau / static_cast<double>(slices.size() - 1);
  const double h = base->h;
  const SparseMatrix& first = slices[0].mass;
  auto mass = [&](const SliceOperators& s) -> const SparseMatrix& {
    return mass_choice == SliceMass::initial ? first : s.mass;
  };
  auto stiff = [](const SliceOperators& s) -> const SparseMatrix& { return s.stiffness; };
  // Temporal part: -(1/2h)(X_i + X_{i+1}) per interval on the diagonal,
  // +(1/2h)(X_i + X_{i+1}) off it.
  base->temporal = tridiagonal(slices, mass, -1.0 / (2.0 * h), 1.0, 2.0, 1.0 / (2.0 * h));
  base->spatial = tridiagonal(slices, stiff, h / 12.0, 3.0, 6.0, h / 12.0);
  base->mass = tridiagonal(slices, mass, h / 12.0, 3.0, 6.0, h / 12.0);
  return base;
}

InflatedSystem inflate(std::shared_ptr<const InflatedBase> base, double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("a must be positive");
  InflatedSystem sys;
  sys.a = a;
  sys.D = (a * a) * base->temporal + base->spatial;
  sys.D.makeCompressed();
  sys.base = std::move(base);
  return sys;
}

InflatedSystem assemble_inflated(std::span<const SliceOperators> slices, double a, double tau,
                                 SliceMass mass) {
  return inflate(build_inflated_base(slices, tau, mass), a);
}

InflatedSystem assemble_inflated(std::span<const SliceOperators> slices, double a,
                                 std::span<const double> times, SliceMass mass) {
  require_uniform_grid(times);
  if (times.size() != slices.size()) throw DomainError("one time per slice required");
  return assemble_inflated(slices, a, times.back() - times.front(), mass);
}

std::vector<InflatedSystem> sweep_a(std::span<const SliceOperators> slices,
                                    std::span<const double> a_values, double tau,
                                    SliceMass mass) {
  const auto base = build_inflated_base(slices, tau, mass);
  std::vector<InflatedSystem> out;
  out.reserve(a_values.size());
  for (double a : a_values) out.push_back(inflate(base, a));
  return out;
}

}  // namespace coherence
