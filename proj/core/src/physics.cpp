#include "invbench/physics.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "invbench/errors.hpp"

namespace invbench::em {

using cplx = std::complex<double>;

FilmResponse solve_film_stack(std::span<const FilmLayer> layers, double incident_index,
                              double substrate_index, double wavelength_nm) {
  if (!(wavelength_nm > 0.0)) throw DomainError("film stack: wavelength must be positive");
  // Tangential (E, H) at the substrate interface for unit transmitted amplitude,
  // carried upward through every layer and sheet.
  cplx e{1.0, 0.0};
  cplx h{substrate_index, 0.0};
  std::vector<cplx> sheet_fields(layers.size());
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const auto& layer = layers[idx];
    if (layer.thickness_nm < 0.0) throw DomainError("film stack: negative layer thickness");
    const double phase = 2.0 * kPi * layer.index * layer.thickness_nm / wavelength_nm;
    const double c = std::cos(phase), s = std::sin(phase);
    const cplx i{0.0, 1.0};
    const cplx e_top = c * e + i * s / layer.index * h;
    const cplx h_top = i * layer.index * s * e + c * h;
    e = e_top;
    h = h_top + layer.sheet * e_top;
    sheet_fields[idx] = e_top;
  }
  const cplx denom = incident_index * e + h;
  const cplx r = (incident_index * e - h) / denom;
  const double incident_power = incident_index * std::norm(denom / (2.0 * incident_index));
  FilmResponse out;
  out.reflectance = std::norm(r);
  out.transmittance = substrate_index / incident_power;
  double absorbed = 0.0;
  for (std::size_t idx = 0; idx < layers.size(); ++idx) {
    absorbed += layers[idx].sheet.real() * std::norm(sheet_fields[idx]);
  }
  out.absorptance = absorbed / incident_power;
  return out;
}

std::complex<double> graphene_drude_sheet(double wavelength_nm, double fermi_level_ev,
                                          double scattering_time_s) {
  const double omega = 2.0 * kPi * kSpeedOfLight / (wavelength_nm * 1e-9);
  const double fermi_j = fermi_level_ev * kElementaryCharge;
  const double weight = kElementaryCharge * kElementaryCharge * fermi_j / (kPi * kHbar * kHbar);
  const cplx sigma = weight * scattering_time_s / cplx(1.0, omega * scattering_time_s);
  return sigma * kVacuumImpedance;
}

namespace {

int wiscombe_stop(double x) {
  const double coeff = x <= 8.0 ? 4.0 : 4.05;
  return static_cast<int>(std::ceil(x + coeff * std::cbrt(x) + 2.0));
}

// psi_n'/psi_n for n = 0..nmax by downward recurrence.
std::vector<double> log_derivative_psi(double z, int nmax) {
  const int start = std::max(nmax, static_cast<int>(std::ceil(std::fabs(z)))) + 16;
  std::vector<double> full(start + 1, 0.0);
  for (int n = start; n > 0; --n) full[n - 1] = n / z - 1.0 / (full[n] + n / z);
  full.resize(nmax + 1);
  return full;
}

// xi_n'/xi_n with xi_n = psi_n + i chi_n, by upward recurrence.
std::vector<cplx> log_derivative_xi(double z, int nmax) {
  std::vector<cplx> d(nmax + 1);
  d[0] = cplx(0.0, 1.0);
  for (int n = 1; n <= nmax; ++n) d[n] = -n / z + 1.0 / (n / z - d[n - 1]);
  return d;
}

// psi_n(z) xi_n(z) for n = 0..nmax.
std::vector<cplx> psi_xi_product(double z, const std::vector<double>& d1, const std::vector<cplx>& d3,
                                 int nmax) {
  std::vector<cplx> p(nmax + 1);
  p[0] = std::sin(z) * cplx(std::sin(z), -std::cos(z));
  for (int n = 1; n <= nmax; ++n) p[n] = p[n - 1] * (n / z - d1[n - 1]) * (n / z - d3[n - 1]);
  return p;
}

}  // namespace

MieResult layered_sphere_scattering(std::span<const double> outer_radii_nm,
                                    std::span<const double> indices, double host_index,
                                    double wavelength_nm) {
  const std::size_t layers = outer_radii_nm.size();
  if (layers == 0 || indices.size() != layers) {
    throw DomainError("mie: need one refractive index per shell");
  }
  if (!(wavelength_nm > 0.0) || !(host_index > 0.0)) {
    throw DomainError("mie: wavelength and host index must be positive");
  }
  double previous = 0.0;
  for (double r : outer_radii_nm) {
    if (!(r > previous)) throw DomainError("mie: shell radii must be strictly increasing and positive");
    previous = r;
  }
  const double k = 2.0 * kPi * host_index / wavelength_nm;
  std::vector<double> x(layers), m(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    x[l] = k * outer_radii_nm[l];
    m[l] = indices[l] / host_index;
  }
  const double x_out = x.back();
  const int nstop = wiscombe_stop(x_out);
  const int cap = nstop + 40;

  // H^a_n and H^b_n of the outermost shell evaluated at its outer surface.
  std::vector<double> d1_core = log_derivative_psi(m[0] * x[0], cap);
  std::vector<cplx> ha(d1_core.begin(), d1_core.end());
  std::vector<cplx> hb = ha;
  for (std::size_t l = 1; l < layers; ++l) {
    const double z1 = m[l] * x[l - 1];
    const double z2 = m[l] * x[l];
    const auto d1_in = log_derivative_psi(z1, cap);
    const auto d1_out = log_derivative_psi(z2, cap);
    const auto d3_in = log_derivative_xi(z1, cap);
    const auto d3_out = log_derivative_xi(z2, cap);
    const auto p_in = psi_xi_product(z1, d1_in, d3_in, cap);
    const auto p_out = psi_xi_product(z2, d1_out, d3_out, cap);
    for (int n = 1; n <= cap; ++n) {
      const cplx q = p_in[n] / p_out[n];
      const cplx g1a = m[l] * ha[n] - m[l - 1] * d1_in[n];
      const cplx g2a = m[l] * ha[n] - m[l - 1] * d3_in[n];
      const cplx ta = q * g1a;
      ha[n] = (g2a * d1_out[n] - ta * d3_out[n]) / (g2a - ta);
      const cplx g1b = m[l - 1] * hb[n] - m[l] * d1_in[n];
      const cplx g2b = m[l - 1] * hb[n] - m[l] * d3_in[n];
      const cplx tb = q * g1b;
      hb[n] = (g2b * d1_out[n] - tb * d3_out[n]) / (g2b - tb);
    }
  }

  // Riccati-Bessel functions of the host argument: psi from the stable
  // log-derivative ratios, xi = psi + i chi with chi by upward recurrence.
  const auto d1_host = log_derivative_psi(x_out, cap);
  std::vector<double> psi(cap + 1), chi(cap + 1);
  psi[0] = std::sin(x_out);
  chi[0] = -std::cos(x_out);
  double chi_prev = std::sin(x_out);  // chi_{-1}
  for (int n = 1; n <= cap; ++n) {
    psi[n] = psi[n - 1] / (d1_host[n] + n / x_out);
    chi[n] = (2.0 * n - 1.0) / x_out * chi[n - 1] - chi_prev;
    chi_prev = chi[n - 1];
  }

  const double m_out = m.back();
  double total = 0.0;
  int n = 1;
  for (; n <= cap; ++n) {
    const cplx xi_n(psi[n], chi[n]);
    const cplx xi_prev(psi[n - 1], chi[n - 1]);
    const cplx fa = ha[n] / m_out + static_cast<double>(n) / x_out;
    const cplx fb = m_out * hb[n] + static_cast<double>(n) / x_out;
    const cplx a = (fa * psi[n] - psi[n - 1]) / (fa * xi_n - xi_prev);
    const cplx b = (fb * psi[n] - psi[n - 1]) / (fb * xi_n - xi_prev);
    const double term = (2.0 * n + 1.0) * (std::norm(a) + std::norm(b));
    if (!std::isfinite(term)) {
      throw NumericError("mie: non-finite coefficient at order " + std::to_string(n));
    }
    total += term;
    if (n >= nstop && term <= 1e-16 * total + 1e-30) break;
  }
  if (n > cap) {
    throw NumericError("mie: series did not converge by order " + std::to_string(cap));
  }
  MieResult out;
  out.efficiency = 2.0 / (x_out * x_out) * total;
  out.cross_section_nm2 = 2.0 * kPi / (k * k) * total;
  out.orders = n;
  return out;
}

}  // namespace invbench::em
