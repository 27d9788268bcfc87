#pragma once

#include "esde/config.hpp"

#include <string>

namespace esde {

/// Physical parameters of the field-driven colloid model.
///
/// Inputs are given in laboratory units (nm, um, volts, Celsius) and the
/// simulation works in reduced units: lengths in particle radii, energies
/// in kT, time in a^2/D0 with D0 = 1.
struct PhysicalParams {
  int n_particles = 30;
  double radius_nm = 1400.0;
  double temperature_c = 20.0;
  double kT = 1.0;  // reduced energy unit
  double f_cm = -0.4667;
  double kappa_inv_nm = 10.0;
  double b_pp = 3216.5;  // kT
  double v_xtal = 1.89;  // V
  double v_star = 0.8;
  double d_g_um = 70.0;
  double eps_r = 80.1;             // water, 20 C
  double viscosity_mpa_s = 1.002;  // water, 20 C; only sets the physical time unit
  double d0 = 1.0;
  double overlap_tolerance = 0.1;  // radii

  /// Peak-to-peak voltage, V* times V_xtal.
  double v_pp() const { return v_star * v_xtal; }
  /// Field scale E0 = V_pp / (sqrt(8) d_g), in V/m.
  double e0() const;
  /// Dimensionless field amplitude lambda = pi eps_m a^3 (f_cm E0)^2 / kT.
  double lambda() const;
  /// Inverse Debye length in units of 1/a.
  double kappa() const { return radius_nm / kappa_inv_nm; }
  /// Electrode gap in units of a.
  double gap() const { return d_g_um * 1000.0 / radius_nm; }
  /// Stokes-Einstein a^2/D0 in seconds, for reporting only.
  double time_unit_seconds() const;

  void validate() const;
  std::string hash() const;

  static PhysicalParams from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

}  // namespace esde
