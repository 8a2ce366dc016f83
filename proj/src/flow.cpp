#include "coherence/flow.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "coherence/errors.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"

namespace coherence {

using nlohmann::json;

std::string to_string(DomainKind kind) { return kind == DomainKind::torus ? "torus" : "box"; }
std::string to_string(Boundary boundary) {
  return boundary == Boundary::periodic ? "periodic" : "neumann";
}

DomainSpec DomainSpec::torus(double lx, double ly) {
  DomainSpec d{DomainKind::torus, {lx, ly}, Boundary::periodic};
  d.validate();
  return d;
}

DomainSpec DomainSpec::box(double lx, double ly) {
  DomainSpec d{DomainKind::box, {lx, ly}, Boundary::neumann};
  d.validate();
  return d;
}

double DomainSpec::max_side() const { return std::max(extents[0], extents[1]); }

void DomainSpec::validate() const {
  for (double e : extents)
    if (!(e > 0.0) || !std::isfinite(e)) throw DomainError("domain extents must be positive");
  if (kind == DomainKind::torus && boundary != Boundary::periodic)
    throw DomainError("a torus domain must be periodic");
}

namespace {
double wrap_coordinate(double v, double l) {
  double w = std::fmod(v, l);
  if (w < 0.0) w += l;
  if (w >= l) w -= l;
  if (w < 0.0) w = 0.0;
  return w;
}
}  // namespace

Vec2 DomainSpec::wrap(Vec2 p) const {
  if (!periodic()) return p;
  return {wrap_coordinate(p.x, extents[0]), wrap_coordinate(p.y, extents[1])};
}

bool DomainSpec::contains(Vec2 p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  if (periodic())
    return p.x >= 0.0 && p.x < extents[0] && p.y >= 0.0 && p.y < extents[1];
  return p.x >= 0.0 && p.x <= extents[0] && p.y >= 0.0 && p.y <= extents[1];
}

// ---------------------------------------------------------------------------
// Childress-Soward field

ChildressSowardSchedule::Parameters ChildressSowardSchedule::at(double t) const {
  const auto it = std::lower_bound(boundaries.begin(), boundaries.end(), t);
  std::ptrdiff_t k = (it - boundaries.begin()) - 1;
  k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(amplitude.size()) - 1);
  return {amplitude[k], shear[k]};
}

void ChildressSowardSchedule::validate() const {
  if (boundaries.size() < 2 || amplitude.size() + 1 != boundaries.size() ||
      shear.size() != amplitude.size())
    throw DomainError("schedule needs one amplitude and shear value per epoch");
  if (!std::is_sorted(boundaries.begin(), boundaries.end()) ||
      std::adjacent_find(boundaries.begin(), boundaries.end()) != boundaries.end())
    throw DomainError("schedule epoch boundaries must be strictly increasing");
  for (std::size_t k = 0; k < amplitude.size(); ++k) {
    if (!std::isfinite(amplitude[k]) || amplitude[k] < 0.0)
      throw DomainError("schedule amplitude must be finite and nonnegative");
    if (!(std::abs(shear[k]) <= 1.0)) throw DomainError("schedule requires |r| <= 1");
  }
}

ChildressSowardSchedule ChildressSowardSchedule::constant(double amplitude, double shear,
                                                          double t0, double t1) {
  ChildressSowardSchedule s{{t0, t1}, {amplitude}, {shear}};
  s.validate();
  return s;
}

ChildressSowardSchedule ChildressSowardSchedule::partially_coherent(AmplitudeReading reading) {
  ChildressSowardSchedule s;
  s.boundaries = {-1.0, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  for (std::size_t k = 0; k + 1 < s.boundaries.size(); ++k) {
    const double mid = 0.5 * (s.boundaries[k] + s.boundaries[k + 1]);
    if (k == 0) {
      s.shear.push_back(0.0);
    } else {
      // sign(0) := +1; never hit at epoch midpoints.
      s.shear.push_back(std::cos(5.0 * std::numbers::pi * mid) >= 0.0 ? 1.0 : -1.0);
    }
    double amp = 0.0;
    if (reading == AmplitudeReading::split) {
      amp = k == 0 ? 40.0 : 30.0;
    } else {
      if (mid <= 0.5) amp += 40.0;
      if (mid > -0.5) amp += 30.0;
    }
    s.amplitude.push_back(amp);
  }
  s.validate();
  return s;
}

Vec2 childress_soward_velocity(double amplitude, double shear, Vec2 p) {
  const double sx = std::sin(p.x), cx = std::cos(p.x);
  const double sy = std::sin(p.y), cy = std::cos(p.y);
  const double dpsi_dy = sx * cy - shear * cx * sy;
  const double dpsi_dx = cx * sy - shear * sx * cy;
  return {amplitude * dpsi_dy, -amplitude * dpsi_dx};
}

Vec2 evaluate_velocity(const ChildressSowardSchedule& schedule, double t, Vec2 p) {
  const auto par = schedule.at(t);
  return childress_soward_velocity(par.amplitude, par.shear, p);
}

double childress_soward_streamfunction(double shear, Vec2 p) {
  return std::sin(p.x) * std::sin(p.y) + shear * std::cos(p.x) * std::cos(p.y);
}

std::vector<Vec2> SeedGrid::points(const DomainSpec& domain) const {
  std::vector<Vec2> pts;
  pts.reserve(nx * ny);
  const double hx = domain.extents[0] / static_cast<double>(nx);
  const double hy = domain.extents[1] / static_cast<double>(ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      pts.push_back({static_cast<double>(i) * hx, static_cast<double>(j) * hy});
  return pts;
}

std::vector<double> uniform_times(double t0, double t1, std::size_t count) {
  if (count < 2) throw DomainError("need at least two time instances");
  std::vector<double> t(count);
  const double h = (t1 - t0) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) t[i] = t0 + static_cast<double>(i) * h;
  t.back() = t1;
  return t;
}

// ---------------------------------------------------------------------------
// Ensemble

TrajectoryEnsemble::TrajectoryEnsemble(DomainSpec domain, std::vector<double> times,
                                       std::vector<std::int64_t> ids,
                                       std::vector<Vec2> positions)
    : domain_(domain), times_(std::move(times)), ids_(std::move(ids)),
      positions_(std::move(positions)) {
  domain_.validate();
  if (times_.size() < 2) throw SchemaError("ensemble needs at least two times");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1])) throw SchemaError("times must be strictly increasing");
  if (ids_.size() < 9) throw SchemaError("ensemble needs at least 3(d+1) = 9 trajectories");
  if (positions_.size() != times_.size() * ids_.size())
    throw SchemaError("positions do not match (times x trajectories)");
  for (std::size_t k = 0; k < positions_.size(); ++k) {
    if (!domain_.contains(positions_[k])) {
      std::ostringstream msg;
      msg << "trajectory " << ids_[k % ids_.size()] << " at time index "
          << k / ids_.size() << " lies outside the domain";
      throw DomainError(msg.str());
    }
  }
}

namespace {

Vec2 rk4_step(double amplitude, double shear, Vec2 p, double dt) {
  const Vec2 k1 = childress_soward_velocity(amplitude, shear, p);
  const Vec2 k2 = childress_soward_velocity(amplitude, shear, p + (0.5 * dt) * k1);
  const Vec2 k3 = childress_soward_velocity(amplitude, shear, p + (0.5 * dt) * k2);
  const Vec2 k4 = childress_soward_velocity(amplitude, shear, p + dt * k3);
  return p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_times(std::span<const double> times) {
  if (times.size() < 2) throw DomainError("need at least two save times");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw DomainError("save times must be strictly increasing");
}

}  // namespace

std::vector<Vec2> integrate_path(const ChildressSowardSchedule& schedule, Vec2 seed,
                                 std::span<const double> times, std::size_t substeps) {
  check_times(times);
  if (substeps == 0) throw DomainError("substeps must be positive");
  std::vector<Vec2> path;
  path.reserve(times.size());
  path.push_back(seed);
  Vec2 p = seed;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double dt = (times[i + 1] - times[i]) / static_cast<double>(substeps);
    for (std::size_t s = 0; s < substeps; ++s) {
      const double mid = times[i] + (static_cast<double>(s) + 0.5) * dt;
      const auto par = schedule.at(mid);
      p = rk4_step(par.amplitude, par.shear, p, dt);
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      std::ostringstream msg;
      msg << "non-finite state at time index " << i + 1
          << "; step too large for the amplitude";
      throw NonFiniteState(msg.str());
    }
    path.push_back(p);
  }
  return path;
}

TrajectoryEnsemble integrate_trajectories(const ChildressSowardSchedule& schedule,
                                          const DomainSpec& domain,
                                          std::span<const Vec2> seeds,
                                          std::span<const double> times,
                                          const IntegrationOptions& options) {
  schedule.validate();
  domain.validate();
  check_times(times);
  const std::size_t n = seeds.size();
  for (const Vec2& s : seeds)
    if (!domain.contains(domain.wrap(s))) throw DomainError("seed lies outside the domain");

  std::vector<Vec2> positions(times.size() * n);
  parallel_for(n, worker_count(options.threads), [&](std::size_t k) {
    const auto path = integrate_path(schedule, seeds[k], times, options.substeps);
    for (std::size_t i = 0; i < path.size(); ++i) {
      const Vec2 q = domain.wrap(path[i]);
      if (!domain.contains(q)) {
        std::ostringstream msg;
        msg << "trajectory " << k << " left the domain at time index " << i;
        throw DomainError(msg.str());
      }
      positions[i * n + k] = q;
    }
  });
  std::vector<std::int64_t> ids(n);
  for (std::size_t k = 0; k < n; ++k) ids[k] = static_cast<std::int64_t>(k);
  return TrajectoryEnsemble(domain, {times.begin(), times.end()}, std::move(ids),
                            std::move(positions));
}

TrajectoryEnsemble integrate_trajectories(const ChildressSowardSchedule& schedule,
                                          const DomainSpec& domain, const SeedGrid& seeds,
                                          std::span<const double> times,
                                          const IntegrationOptions& options) {
  const auto pts = seeds.points(domain);
  return integrate_trajectories(schedule, domain, std::span<const Vec2>(pts), times, options);
}

// ---------------------------------------------------------------------------
// Manifest + CSV

namespace {

json domain_to_json(const DomainSpec& d) {
  return {{"kind", to_string(d.kind)},
          {"extents", {d.extents[0], d.extents[1]}},
          {"boundary", to_string(d.boundary)}};
}

DomainSpec domain_from_json(const json& j) {
  try {
    DomainSpec d;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "torus") d.kind = DomainKind::torus;
    else if (kind == "box") d.kind = DomainKind::box;
    else throw SchemaError("unknown domain kind '" + kind + "'");
    const auto ext = j.at("extents").get<std::vector<double>>();
    if (ext.size() != 2) throw SchemaError("domain extents must have two entries");
    d.extents = {ext[0], ext[1]};
    const auto bc = j.value("boundary", d.kind == DomainKind::torus ? "periodic" : "neumann");
    if (bc == "periodic") d.boundary = Boundary::periodic;
    else if (bc == "neumann") d.boundary = Boundary::neumann;
    else throw SchemaError("unknown boundary '" + bc + "'");
    d.validate();
    return d;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad domain block: ") + e.what());
  }
}

}  // namespace

std::filesystem::path save_trajectories(const TrajectoryEnsemble& ensemble,
                                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string csv = "traj_id,time_index,x,y\n";
  csv.reserve(ensemble.positions().size() * 48);
  for (std::size_t i = 0; i < ensemble.num_times(); ++i) {
    for (std::size_t n = 0; n < ensemble.num_trajectories(); ++n) {
      const Vec2 p = ensemble.position(i, n);
      csv += std::to_string(ensemble.ids()[n]);
      csv += ',';
      csv += std::to_string(i);
      csv += ',';
      csv += io::format_double(p.x);
      csv += ',';
      csv += io::format_double(p.y);
      csv += '\n';
    }
  }
  io::write_text(dir / "trajectories.csv", csv);

  json manifest;
  manifest["domain"] = domain_to_json(ensemble.domain());
  manifest["times"] = std::vector<double>(ensemble.times().begin(), ensemble.times().end());
  manifest["data"] = "trajectories.csv";
  const auto path = dir / "manifest.json";
  // 17 significant digits keep the times bit-exact.
  io::write_text(path, manifest.dump(2));
  return path;
}

TrajectoryEnsemble load_trajectories(const std::filesystem::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw ParseError("manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("domain") || !manifest.contains("times") || !manifest.contains("data"))
    throw SchemaError("manifest needs 'domain', 'times' and 'data'");
  const DomainSpec domain = domain_from_json(manifest["domain"]);
  std::vector<double> times;
  std::string data;
  try {
    times = manifest["times"].get<std::vector<double>>();
    data = manifest["data"].get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  std::filesystem::path csv_path = data;
  if (csv_path.is_relative()) csv_path = manifest_path.parent_path() / csv_path;

  const std::string text = io::read_text(csv_path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trajectory file is empty");
  const auto header = io::split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("traj_id"), c_t = column("time_index"), c_x = column("x"),
                    c_y = column("y");
  const std::size_t width = header.size();

  struct Row {
    std::int64_t id;
    std::size_t t;
    Vec2 p;
  };
  std::vector<Row> rows;
  std::size_t row_number = 0;  // data rows, header excluded
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty() || line == "\r") continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != width)
      throw ParseError("row " + std::to_string(row_number) + ": expected " +
                       std::to_string(width) + " fields");
    long long id = 0, ti = 0;
    double x = 0.0, y = 0.0;
    if (!io::parse_int(f[c_id], id) || !io::parse_int(f[c_t], ti) ||
        !io::parse_double(f[c_x], x) || !io::parse_double(f[c_y], y))
      throw ParseError("row " + std::to_string(row_number) + ": malformed value");
    if (!std::isfinite(x) || !std::isfinite(y))
      throw ParseError("row " + std::to_string(row_number) + ": non-finite coordinate");
    if (ti < 0 || static_cast<std::size_t>(ti) >= times.size())
      throw ParseError("row " + std::to_string(row_number) + ": time_index out of range");
    rows.push_back({id, static_cast<std::size_t>(ti), {x, y}});
  }

  std::map<std::int64_t, std::size_t> index;
  for (const Row& r : rows) index.emplace(r.id, 0);
  std::vector<std::int64_t> ids;
  ids.reserve(index.size());
  for (auto& [id, k] : index) {
    k = ids.size();
    ids.push_back(id);
  }
  const std::size_t n = ids.size();
  std::vector<Vec2> positions(times.size() * n);
  std::vector<char> seen(times.size() * n, 0);
  std::size_t wrapped = 0;
  for (const Row& r : rows) {
    const std::size_t slot = r.t * n + index[r.id];
    if (seen[slot])
      throw ParseError("duplicate row for trajectory " + std::to_string(r.id) +
                       " at time index " + std::to_string(r.t));
    seen[slot] = 1;
    Vec2 p = r.p;
    if (!domain.contains(p)) {
      if (!domain.periodic())
        throw DomainError("trajectory " + std::to_string(r.id) + " at time index " +
                          std::to_string(r.t) + " lies outside the box");
      p = domain.wrap(p);
      ++wrapped;
    }
    positions[slot] = p;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < times.size(); ++i)
      if (!seen[i * n + k])
        throw GapError("trajectory " + std::to_string(ids[k]) + " missing at time index " +
                       std::to_string(i));

  TrajectoryEnsemble ensemble(domain, std::move(times), std::move(ids), std::move(positions));
  ensemble.wrapped_on_load = wrapped;
  return ensemble;
}

}  // namespace coherence
