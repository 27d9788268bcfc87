#include "esde/brownian.hpp"

#include "esde/io.hpp"
#include "esde/parallel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace esde::bd {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite input");
}

// Coefficient c_f of the radial field energy c_f |r|^2.
double field_coefficient(const PhysicalParams& p) {
  if (p.f_cm == 0.0) throw DomainError("dipole_field_energy: f_cm = 0");
  const double g = p.gap();
  return -2.0 * p.kT * p.lambda() / p.f_cm * 16.0 / (g * g);
}

// Prefactor K in u_dd = -K [3 (s.m)^2 / rho^5 - |m|^2 / rho^3], with s the
// separation and m the midpoint. Follows from |E/E0|^2 = 16 |m|^2 / d_g^2 and
// P2(cos theta) |m|^2 = (3 (s.m)^2 / rho^2 - |m|^2) / 2.
double dipole_coefficient(const PhysicalParams& p) {
  const double g = p.gap();
  return 64.0 * p.kT * p.lambda() / (g * g);
}

std::size_t steps_for(double duration, double dt, const char* what) {
  const double ratio = duration / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
    throw DomainError(std::string(what) + " must be an integer multiple of dt");
  return static_cast<std::size_t>(rounded);
}

}  // namespace

OverlapError::OverlapError(int i, int j, double r)
    : DomainError("particles " + std::to_string(i) + " and " + std::to_string(j) +
                  " overlap (r = " + io::fmt(r) + ")"),
      first(i),
      second(j),
      distance(r) {}

double pair_electrostatic_energy(double r, const PhysicalParams& p) {
  require_finite(r, "pair_electrostatic_energy");
  if (r <= 0) throw DomainError("pair_electrostatic_energy: r must be > 0");
  return p.b_pp * std::exp(-p.kappa() * (r - 2.0));
}

double dipole_field_energy(const Vec2& r, const PhysicalParams& p) {
  require_finite(r.x(), "dipole_field_energy");
  require_finite(r.y(), "dipole_field_energy");
  return field_coefficient(p) * r.squaredNorm();
}

double dipole_dipole_energy(const Vec2& ri, const Vec2& rj, const PhysicalParams& p) {
  const Vec2 s = ri - rj;
  const double rho2 = s.squaredNorm();
  if (!std::isfinite(rho2)) throw DomainError("dipole_dipole_energy: non-finite input");
  if (rho2 == 0.0) throw DomainError("dipole_dipole_energy: coincident particles");
  const Vec2 m = 0.5 * (ri + rj);
  const double rho = std::sqrt(rho2);
  const double sm = s.dot(m);
  const double inv3 = 1.0 / (rho2 * rho);
  return -dipole_coefficient(p) * (3.0 * sm * sm * inv3 / rho2 - m.squaredNorm() * inv3);
}

double total_energy(const Points& x, const PhysicalParams& p) {
  const auto n = x.rows();
  double u = 0.0;
  const double cf = field_coefficient(p);
  for (Eigen::Index i = 0; i < n; ++i) u += cf * x.row(i).squaredNorm();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Vec2 ri = x.row(i).transpose();
      const Vec2 rj = x.row(j).transpose();
      u += pair_electrostatic_energy((ri - rj).norm(), p);
      u += dipole_dipole_energy(ri, rj, p);
    }
  }
  return u;
}

Points total_forces(const Points& x, const PhysicalParams& p) {
  const auto n = x.rows();
  Points f(n, 2);
  const double cf = field_coefficient(p);
  const double kd = dipole_coefficient(p);
  const double kappa = p.kappa();
  const double floor2 = p.overlap_tolerance * p.overlap_tolerance;
  for (Eigen::Index i = 0; i < n; ++i) f.row(i) = -2.0 * cf * x.row(i);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x(i, 0), yi = x(i, 1);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double sx = xi - x(j, 0), sy = yi - x(j, 1);
      const double rho2 = sx * sx + sy * sy;
      if (!(rho2 >= floor2))
        throw OverlapError(static_cast<int>(i), static_cast<int>(j), std::sqrt(rho2));
      const double rho = std::sqrt(rho2);
      const double inv = 1.0 / rho;

      // Repulsion: -dU/drho = kappa U, directed along s.
      const double decay = kappa * (rho - 2.0);
      const double ue = decay < 50.0 ? p.b_pp * std::exp(-decay) : 0.0;
      double fx = kappa * ue * sx * inv;
      double fy = kappa * ue * sy * inv;

      if (kd != 0.0) {
        const double mx = 0.5 * (xi + x(j, 0)), my = 0.5 * (yi + x(j, 1));
        const double sm = sx * mx + sy * my;
        const double mm = mx * mx + my * my;
        const double inv3 = inv * inv * inv;
        const double inv5 = inv3 * inv * inv;
        const double inv7 = inv5 * inv * inv;
        // g(s, m) = 3 (s.m)^2 rho^-5 - |m|^2 rho^-3; u = -kd g.
        const double gs_m = 6.0 * sm * inv5;
        const double gs_s = -15.0 * sm * sm * inv7 + 3.0 * mm * inv5;
        const double gm_s = 6.0 * sm * inv5;
        const double gm_m = -2.0 * inv3;
        const double dgs_x = gs_m * mx + gs_s * sx, dgs_y = gs_m * my + gs_s * sy;
        const double dgm_x = gm_s * sx + gm_m * mx, dgm_y = gm_s * sy + gm_m * my;
        // F_i = -du/dr_i = kd (dg/ds + dg/dm / 2); F_j = kd (-dg/ds + dg/dm / 2).
        f(i, 0) += kd * (dgs_x + 0.5 * dgm_x);
        f(i, 1) += kd * (dgs_y + 0.5 * dgm_y);
        f(j, 0) += kd * (-dgs_x + 0.5 * dgm_x);
        f(j, 1) += kd * (-dgs_y + 0.5 * dgm_y);
      }
      f(i, 0) += fx;
      f(i, 1) += fy;
      f(j, 0) -= fx;
      f(j, 1) -= fy;
    }
  }
  return f;
}

Configuration bd_step(const Configuration& c, double dt, Rng& rng, const PhysicalParams& p,
                      const StepOptions& opts) {
  if (!(dt > 0)) throw DomainError("bd_step: dt must be > 0");
  Configuration out = c;
  const double mobility_dt = p.d0 / p.kT * dt;
  const double noise = opts.noise_scale * std::sqrt(2.0 * p.d0 * dt);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (opts.interactions) {
    Points step = mobility_dt * total_forces(c.positions, p);
    if (opts.max_drift_step > 0) {
      for (Eigen::Index i = 0; i < step.rows(); ++i) {
        const double len = step.row(i).norm();
        if (len > opts.max_drift_step) step.row(i) *= opts.max_drift_step / len;
      }
    }
    out.positions += step;
  }
  for (Eigen::Index i = 0; i < out.positions.rows(); ++i) {
    out.positions(i, 0) += opts.external_velocity.x() * dt;
    out.positions(i, 1) += opts.external_velocity.y() * dt;
    // Draws are made even at zero noise so the stream position is independent of noise_scale.
    const double zx = normal(rng);
    const double zy = normal(rng);
    out.positions(i, 0) += noise * zx;
    out.positions(i, 1) += noise * zy;
  }
  out.time = c.time + dt;
  if (!out.positions.allFinite()) throw NumericalError("bd_step: non-finite positions");
  return out;
}

Trajectory simulate(const Configuration& c0, double horizon, double dt, double save_interval,
                    std::uint64_t seed, const PhysicalParams& p, const StepOptions& opts) {
  if (!(dt > 0) || !(save_interval > 0) || !(horizon >= 0))
    throw DomainError("simulate: dt, save_interval must be > 0 and horizon >= 0");
  const std::size_t per_frame = steps_for(save_interval, dt, "save_interval");
  const std::size_t n_frames = static_cast<std::size_t>(std::floor(horizon / save_interval + 1e-9));
  Trajectory traj;
  traj.dt = dt;
  traj.save_interval = save_interval;
  traj.params_hash = p.hash();
  traj.frames.reserve(n_frames + 1);
  traj.frames.push_back(c0);
  Rng rng = make_rng(seed);
  Configuration c = c0;
  for (std::size_t f = 1; f <= n_frames; ++f) {
    for (std::size_t s = 0; s < per_frame; ++s) c = bd_step(c, dt, rng, p, opts);
    // Frame times are assigned exactly to avoid drift from repeated additions.
    c.time = c0.time + static_cast<double>(f) * save_interval;
    traj.frames.push_back(c);
  }
  return traj;
}

std::vector<Configuration> burst(const Configuration& c, int n_replicas, double h, double dt,
                                 std::uint64_t seed, const PhysicalParams& p,
                                 const StepOptions& opts) {
  if (!(h >= dt) || !(dt > 0)) throw DomainError("burst: requires h >= dt > 0");
  if (n_replicas < 1) throw DomainError("burst: n_replicas must be >= 1");
  const std::size_t steps = steps_for(h, dt, "burst duration");
  std::vector<Configuration> out(static_cast<std::size_t>(n_replicas));
  parallel_for(n_replicas, [&](long long r) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
    Configuration x = c;
    for (std::size_t s = 0; s < steps; ++s) x = bd_step(x, dt, rng, p, opts);
    x.time = c.time + h;
    out[static_cast<std::size_t>(r)] = std::move(x);
  });
  return out;
}

Configuration random_initial(int n, double disk_radius, double min_separation,
                             std::uint64_t seed) {
  if (n < 1) throw DomainError("random_initial: n must be >= 1");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Configuration c;
  c.positions.resize(n, 2);
  const double min2 = min_separation * min_separation;
  constexpr int kMaxTries = 100000;
  for (int i = 0; i < n; ++i) {
    int tries = 0;
    for (;;) {
      if (++tries > kMaxTries)
        throw DomainError("random_initial: disk too small for " + std::to_string(n) + " particles");
      const double r = disk_radius * std::sqrt(unit(rng));
      const double th = 2.0 * std::numbers::pi * unit(rng);
      const double x = r * std::cos(th), y = r * std::sin(th);
      bool ok = true;
      for (int j = 0; j < i && ok; ++j) {
        const double dx = x - c.positions(j, 0), dy = y - c.positions(j, 1);
        ok = dx * dx + dy * dy >= min2;
      }
      if (ok) {
        c.positions(i, 0) = x;
        c.positions(i, 1) = y;
        break;
      }
    }
  }
  return c;
}

void write_trajectory(const std::string& path, const Trajectory& t) {
  const int n = t.frames.empty() ? 0 : t.frames.front().size();
  std::string out = "# esde-trajectory N=" + std::to_string(n) + " dt=" + io::fmt(t.dt) +
                    " save_interval=" + io::fmt(t.save_interval) +
                    " params_hash=" + (t.params_hash.empty() ? "none" : t.params_hash) + "\n";
  for (const auto& f : t.frames) {
    if (f.size() != n) throw DomainError("write_trajectory: inconsistent particle count");
    io::append(out, f.time);
    for (int i = 0; i < n; ++i) {
      out += ' ';
      io::append(out, f.positions(i, 0));
      out += ' ';
      io::append(out, f.positions(i, 1));
    }
    out += '\n';
  }
  io::write_file(path, out);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trajectory '" + path + "'");
  std::string header;
  if (!std::getline(in, header) || header.rfind("# esde-trajectory", 0) != 0)
    throw FormatError(path + ": missing trajectory header");
  Trajectory t;
  const int n = std::stoi(io::header_value(header, "N"));
  t.dt = std::stod(io::header_value(header, "dt"));
  t.save_interval = std::stod(io::header_value(header, "save_interval"));
  t.params_hash = io::header_value(header, "params_hash");
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto v = io::parse_numbers(line, path + ":" + std::to_string(lineno));
    if (v.size() != static_cast<std::size_t>(2 * n + 1))
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(2 * n + 1) + " values, got " + std::to_string(v.size()));
    Configuration c;
    c.time = v[0];
    c.params_ref = t.params_hash;
    c.positions.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      c.positions(i, 0) = v[1 + 2 * i];
      c.positions(i, 1) = v[2 + 2 * i];
    }
    if (!c.positions.allFinite()) throw FormatError(path + ": non-finite coordinate");
    if (!t.frames.empty() && !(c.time > t.frames.back().time))
      throw FormatError(path + ":" + std::to_string(lineno) + ": frame times must increase");
    t.frames.push_back(std::move(c));
  }
  return t;
}

}  // namespace esde::bd
