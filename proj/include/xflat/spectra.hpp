#pragma once

// Emission spectra. The number spectrum of each species/flavor is a pinched
// Fermi-Dirac shape f(E) ~ E^2 / (exp(E/T - eta) + 1) whose temperature is set
// from the requested mean energy. Discrete weights are normalized on the
// energy grid itself, so they sum to L / <E> exactly up to rounding.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "xflat/error.hpp"
#include "xflat/grid.hpp"

namespace xflat {

enum class Species : std::uint8_t { neutrino = 0, antineutrino = 1 };

inline constexpr std::size_t kSpeciesCount = 2;
inline constexpr std::array<Species, kSpeciesCount> kAllSpecies{Species::neutrino, Species::antineutrino};

constexpr std::size_t index_of(Species s) noexcept { return static_cast<std::size_t>(s); }

inline const char* to_string(Species s) noexcept {
  return s == Species::neutrino ? "neutrino" : "antineutrino";
}

/// Initial flavor of an emitted neutrino. All non-electron flavors share the
/// heavy-lepton spectrum.
enum class EmissionFlavor : std::uint8_t { electron = 0, heavy = 1 };

inline constexpr std::size_t kEmissionFlavorCount = 2;

struct FlavorSpectrum {
  double luminosity = 1.0;
  double mean_energy = 10.0;
  double pinching = 0.0;
};

struct Spectra {
  // [species][emission flavor]
  std::array<std::array<FlavorSpectrum, kEmissionFlavorCount>, kSpeciesCount> table{{
      {{{1.0, 10.0, 0.0}, {1.0, 20.0, 0.0}}},
      {{{1.0, 15.0, 0.0}, {1.0, 20.0, 0.0}}},
  }};

  FlavorSpectrum& operator()(Species s, EmissionFlavor f) { return table[index_of(s)][static_cast<std::size_t>(f)]; }
  const FlavorSpectrum& operator()(Species s, EmissionFlavor f) const {
    return table[index_of(s)][static_cast<std::size_t>(f)];
  }

  void validate() const {
    for (auto s : kAllSpecies) {
      for (std::size_t f = 0; f < kEmissionFlavorCount; ++f) {
        const auto& spec = table[index_of(s)][f];
        const std::string name = std::string("spectra.") + (s == Species::neutrino ? "nu" : "nubar") +
                                 (f == 0 ? "_e" : "_x");
        if (!(spec.luminosity >= 0.0) || !std::isfinite(spec.luminosity)) {
          throw ConfigError(name + ".luminosity", "must be finite and >= 0");
        }
        if (!(spec.mean_energy > 0.0) || !std::isfinite(spec.mean_energy)) {
          throw ConfigError(name + ".mean_energy", "must be finite and > 0");
        }
        if (!std::isfinite(spec.pinching)) throw ConfigError(name + ".pinching", "must be finite");
      }
    }
  }
};

/// Complete Fermi-Dirac integral F_k(eta) = int_0^inf x^k / (exp(x - eta) + 1) dx.
inline double fermi_dirac_integral(int k, double eta) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [k, eta](double x) {
    const double arg = x - eta;
    if (arg > 700.0) return 0.0;
    return std::pow(x, k) / (std::exp(arg) + 1.0);
  };
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity());
}

/// Ratio <E> / T of the pinched Fermi-Dirac number spectrum (3.15137 at eta = 0).
inline double fermi_dirac_mean_ratio(double eta) {
  return fermi_dirac_integral(3, eta) / fermi_dirac_integral(2, eta);
}

inline double spectrum_temperature(const FlavorSpectrum& spec) {
  return spec.mean_energy / fermi_dirac_mean_ratio(spec.pinching);
}

/// Unnormalized number spectrum shape.
inline double fermi_dirac_shape(double energy, double temperature, double eta) {
  const double arg = energy / temperature - eta;
  if (arg > 700.0) return 0.0;
  return energy * energy / (std::exp(arg) + 1.0);
}

/// Per-energy-bin weights f_hat(E_k) * dE_k * L / <E>, with f_hat normalized
/// so that sum_k f_hat(E_k) dE_k = 1 on this grid.
inline std::vector<double> spectral_weights(const Grid& grid, const FlavorSpectrum& spec) {
  const std::size_t n = grid.n_energy();
  std::vector<double> w(n, 0.0);
  if (spec.luminosity == 0.0) return w;

  const double temperature = spectrum_temperature(spec);
  const auto e = grid.e_nodes();
  const auto de = grid.e_weights();
  double norm = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = fermi_dirac_shape(e[k], temperature, spec.pinching);
    norm += w[k] * de[k];
  }
  if (!(norm > 0.0)) {
    throw ConfigError("grid.e_max", "energy grid carries no spectral weight (spectrum underflows)");
  }
  const double number_flux = spec.luminosity / spec.mean_energy;
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = (w[k] / norm) * de[k] * number_flux;
  }
  return w;
}

}  // namespace xflat
