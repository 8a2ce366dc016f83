#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace coherence {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

enum class DomainKind { torus, box };
enum class Boundary { periodic, neumann };

/// Planar flow domain: a flat torus or a rectangle [0, lx] x [0, ly].
struct DomainSpec {
  DomainKind kind = DomainKind::torus;
  std::array<double, 2> extents{0.0, 0.0};
  Boundary boundary = Boundary::periodic;

  static DomainSpec torus(double lx, double ly);
  static DomainSpec box(double lx, double ly);

  double area() const { return extents[0] * extents[1]; }
  double max_side() const;
  bool periodic() const { return kind == DomainKind::torus; }
  /// Throws DomainError when extents are not positive or a torus is not periodic.
  void validate() const;
  /// Torus coordinates mapped into [0, l) per axis; box points unchanged.
  Vec2 wrap(Vec2 p) const;
  bool contains(Vec2 p) const;
};

/// Piecewise-constant amplitude A(t) and shear parameter r(t) of the
/// Childress-Soward field. Epoch k covers (boundaries[k], boundaries[k+1]];
/// the first epoch is closed on the left. Times outside the covered range
/// use the nearest epoch.
struct ChildressSowardSchedule {
  std::vector<double> boundaries;
  std::vector<double> amplitude;
  std::vector<double> shear;

  struct Parameters {
    double amplitude;
    double shear;
  };

  Parameters at(double t) const;
  void validate() const;

  /// Constant-in-time field.
  static ChildressSowardSchedule constant(double amplitude, double shear,
                                          double t0 = -1.0, double t1 = 1.0);

  /// How the amplitude indicator supports of the partially coherent example
  /// are read. `split` gives A = 40 on [-1,-0.5] and 30 afterwards;
  /// `overlap` takes the supports [-1,0.5] and (-0.5,1] literally, so both
  /// terms add to 70 on (-0.5,0.5].
  enum class AmplitudeReading { split, overlap };

  /// Partially coherent example on [-1,1]: four vortices (r = 0) until
  /// t = -0.5, then alternating diagonal shears r = sign(cos(5 pi t)).
  static ChildressSowardSchedule partially_coherent(
      AmplitudeReading reading = AmplitudeReading::split);
};

/// Velocity A (d psi/dy, -d psi/dx) of psi = sin x sin y + r cos x cos y.
Vec2 childress_soward_velocity(double amplitude, double shear, Vec2 p);
Vec2 evaluate_velocity(const ChildressSowardSchedule& schedule, double t, Vec2 p);
double childress_soward_streamfunction(double shear, Vec2 p);

/// Regular nx x ny lattice of seeds at (i lx/nx, j ly/ny); seed id = j*nx + i.
struct SeedGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<Vec2> points(const DomainSpec& domain) const;
};

/// N trajectories sampled at T+1 common times. positions are stored slice by
/// slice: position(i, n) is trajectory n at times[i].
class TrajectoryEnsemble {
 public:
  TrajectoryEnsemble() = default;
  TrajectoryEnsemble(DomainSpec domain, std::vector<double> times,
                     std::vector<std::int64_t> ids, std::vector<Vec2> positions);

  const DomainSpec& domain() const { return domain_; }
  std::span<const double> times() const { return times_; }
  std::span<const std::int64_t> ids() const { return ids_; }
  std::size_t num_times() const { return times_.size(); }
  std::size_t num_trajectories() const { return ids_.size(); }
  double duration() const { return times_.back() - times_.front(); }

  Vec2 position(std::size_t time_index, std::size_t traj) const {
    return positions_[time_index * ids_.size() + traj];
  }
  std::span<const Vec2> slice(std::size_t time_index) const {
    return {positions_.data() + time_index * ids_.size(), ids_.size()};
  }
  std::span<const Vec2> positions() const { return positions_; }

  /// Number of torus points wrapped into the fundamental cell while loading.
  std::size_t wrapped_on_load = 0;

 private:
  DomainSpec domain_;
  std::vector<double> times_;
  std::vector<std::int64_t> ids_;
  std::vector<Vec2> positions_;
};

struct IntegrationOptions {
  std::size_t substeps = 20;
  /// Worker threads; 0 means "use hardware concurrency capped by
  /// COHERENCE_THREADS".
  std::size_t threads = 0;
};

/// Classical RK4 with a fixed number of substeps per save interval. The
/// schedule is sampled at each substep midpoint, so discontinuities aligned
/// with save times are never straddled.
TrajectoryEnsemble integrate_trajectories(const ChildressSowardSchedule& schedule,
                                          const DomainSpec& domain, const SeedGrid& seeds,
                                          std::span<const double> times,
                                          const IntegrationOptions& options = {});

/// Same integrator over explicit seed points.
TrajectoryEnsemble integrate_trajectories(const ChildressSowardSchedule& schedule,
                                          const DomainSpec& domain,
                                          std::span<const Vec2> seeds,
                                          std::span<const double> times,
                                          const IntegrationOptions& options = {});

/// Unwrapped RK4 path of one seed (no torus wrapping), one entry per time.
std::vector<Vec2> integrate_path(const ChildressSowardSchedule& schedule, Vec2 seed,
                                 std::span<const double> times, std::size_t substeps);

std::vector<double> uniform_times(double t0, double t1, std::size_t count);

/// Writes manifest.json and trajectories.csv into `dir`; returns the manifest path.
std::filesystem::path save_trajectories(const TrajectoryEnsemble& ensemble,
                                        const std::filesystem::path& dir);
TrajectoryEnsemble load_trajectories(const std::filesystem::path& manifest);

std::string to_string(DomainKind kind);
std::string to_string(Boundary boundary);

}  // namespace coherence
