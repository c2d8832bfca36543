#pragma once

// Analytic electromagnetic solvers behind the stack and shell tasks.

#include <complex>
#include <span>

namespace invbench::em {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kHbar = 1.054571817e-34;              // J s
inline constexpr double kSpeedOfLight = 299792458.0;          // m/s
inline constexpr double kVacuumImpedance = 376.730313668;     // ohm

// --- thin-film transfer matrix (normal incidence) ---------------------------

// One homogeneous lossless layer with an optional conductive sheet on its
// incident-side face. `sheet` is the surface conductivity in units of the
// free-space admittance (sigma * Z0).
struct FilmLayer {
  double index = 1.0;
  double thickness_nm = 0.0;
  std::complex<double> sheet{0.0, 0.0};
};

struct FilmResponse {
  double reflectance = 0.0;
  double transmittance = 0.0;
  // Power dissipated in the conductive sheets, computed from the local field
  // at each sheet rather than as 1 - R - T.
  double absorptance = 0.0;
};

FilmResponse solve_film_stack(std::span<const FilmLayer> layers, double incident_index,
                              double substrate_index, double wavelength_nm);

// Drude intraband surface conductivity of graphene, normalized by the
// free-space admittance, in the exp(+i omega t) convention.
std::complex<double> graphene_drude_sheet(double wavelength_nm, double fermi_level_ev,
                                          double scattering_time_s);

// --- layered sphere Mie scattering -------------------------------------------

struct MieResult {
  double efficiency = 0.0;        // C_sca / (pi r_outer^2)
  double cross_section_nm2 = 0.0;
  int orders = 0;                 // multipole orders summed
};

// Scattering by concentric spherical shells with real refractive indices.
// `outer_radii_nm` is strictly increasing (core first); `indices` has one
// entry per shell. Uses log-derivative recursion through the shells with an
// adaptive Wiscombe-style series cutoff.
MieResult layered_sphere_scattering(std::span<const double> outer_radii_nm,
                                    std::span<const double> indices, double host_index,
                                    double wavelength_nm);

}  // namespace invbench::em
