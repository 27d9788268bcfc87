#include "esde/params.hpp"

#include "esde/hash.hpp"
#include "esde/types.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace esde {
namespace {

constexpr double kBoltzmann = 1.380649e-23;   // J/K
constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m

double thermal_energy_joule(double celsius) { return kBoltzmann * (celsius + 273.15); }

}  // namespace

double PhysicalParams::e0() const {
  return v_pp() / (std::sqrt(8.0) * d_g_um * 1e-6);
}

double PhysicalParams::lambda() const {
  const double a = radius_nm * 1e-9;
  const double eps_m = eps_r * kVacuumPermittivity;
  const double fe = f_cm * e0();
  return std::numbers::pi * eps_m * a * a * a * fe * fe / thermal_energy_joule(temperature_c);
}

double PhysicalParams::time_unit_seconds() const {
  const double a = radius_nm * 1e-9;
  const double d0_si =
      thermal_energy_joule(temperature_c) / (6.0 * std::numbers::pi * viscosity_mpa_s * 1e-3 * a);
  return a * a / d0_si;
}

void PhysicalParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid physical parameters: ") + what);
  };
  require(n_particles >= 1, "N must be >= 1");
  require(radius_nm > 0 && std::isfinite(radius_nm), "radius must be > 0");
  require(d_g_um > 0 && std::isfinite(d_g_um), "electrode gap must be > 0");
  require(d0 > 0 && std::isfinite(d0), "D0 must be > 0");
  require(kappa_inv_nm > 0 && std::isfinite(kappa_inv_nm), "Debye length must be > 0");
  require(kT > 0, "kT must be > 0");
  require(f_cm != 0.0 && std::isfinite(f_cm), "Clausius-Mossotti factor must be non-zero");
  require(v_xtal > 0, "V_xtal must be > 0");
  require(v_star >= 0, "V* must be >= 0");
  require(eps_r > 0, "eps_r must be > 0");
  require(overlap_tolerance > 0, "overlap tolerance must be > 0");
  const double lam = lambda();
  require(std::isfinite(lam) && lam >= 0, "lambda must be finite and >= 0");
}

KeyValueConfig PhysicalParams::to_config() const {
  KeyValueConfig cfg;
  auto put = [&](const char* k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    cfg.set(k, os.str());
  };
  cfg.set("N", std::to_string(n_particles));
  put("radius_nm", radius_nm);
  put("temperature_C", temperature_c);
  put("kT", kT);
  put("f_cm", f_cm);
  put("kappa_inv_nm", kappa_inv_nm);
  put("B_pp", b_pp);
  put("V_xtal", v_xtal);
  put("V_star", v_star);
  put("d_g_um", d_g_um);
  put("eps_r", eps_r);
  put("viscosity_mPa_s", viscosity_mpa_s);
  put("D0", d0);
  put("overlap_tolerance", overlap_tolerance);
  return cfg;
}

PhysicalParams PhysicalParams::from_config(const KeyValueConfig& cfg) {
  PhysicalParams p;
  p.n_particles = static_cast<int>(cfg.get_int("N", p.n_particles));
  p.radius_nm = cfg.get_double("radius_nm", p.radius_nm);
  p.temperature_c = cfg.get_double("temperature_C", p.temperature_c);
  p.kT = cfg.get_double("kT", p.kT);
  p.f_cm = cfg.get_double("f_cm", p.f_cm);
  p.kappa_inv_nm = cfg.get_double("kappa_inv_nm", p.kappa_inv_nm);
  p.b_pp = cfg.get_double("B_pp", p.b_pp);
  p.v_xtal = cfg.get_double("V_xtal", p.v_xtal);
  p.v_star = cfg.get_double("V_star", p.v_star);
  p.d_g_um = cfg.get_double("d_g_um", p.d_g_um);
  p.eps_r = cfg.get_double("eps_r", p.eps_r);
  p.viscosity_mpa_s = cfg.get_double("viscosity_mPa_s", p.viscosity_mpa_s);
  p.d0 = cfg.get_double("D0", p.d0);
  p.overlap_tolerance = cfg.get_double("overlap_tolerance", p.overlap_tolerance);
  p.validate();
  return p;
}

std::string PhysicalParams::hash() const { return hash_hex(to_config().canonical()); }

}  // namespace esde
