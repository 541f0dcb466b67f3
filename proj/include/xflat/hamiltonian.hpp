#pragma once

// Vacuum/matter Hamiltonian and the per-beam effective generator of radial
// evolution. Two-flavor only; the packed form {H00, H11, Re H01, Im H01} is
// what the vectorized kernels use, and the HermitianMatrix overloads are
// built from the exact same scalar expressions so both routes agree bitwise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xflat/error.hpp"
#include "xflat/hermitian.hpp"
#include "xflat/spectra.hpp"

namespace xflat {

/// Diagonal matter potential lambda(r): a constant or a tabulated profile
/// (linear interpolation, clamped at the table ends).
class MatterProfile {
 public:
  MatterProfile() = default;

  static MatterProfile constant(double lambda) {
    MatterProfile p;
    p.constant_ = lambda;
    return p;
  }

  static MatterProfile table(std::vector<double> radii, std::vector<double> values) {
    if (radii.size() != values.size() || radii.empty()) {
      throw ConfigError("vacuum.matter_table", "radius and potential columns must be non-empty and equal length");
    }
    for (std::size_t i = 1; i < radii.size(); ++i) {
      if (!(radii[i] > radii[i - 1])) throw ConfigError("vacuum.matter_table", "radii must be strictly increasing");
    }
    MatterProfile p;
    p.radii_ = std::move(radii);
    p.values_ = std::move(values);
    return p;
  }

  bool is_tabulated() const noexcept { return !radii_.empty(); }

  double operator()(double r) const noexcept {
    if (radii_.empty()) return constant_;
    if (r <= radii_.front()) return values_.front();
    if (r >= radii_.back()) return values_.back();
    const auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - radii_.begin());
    const double t = (r - radii_[i - 1]) / (radii_[i] - radii_[i - 1]);
    return values_[i - 1] + t * (values_[i] - values_[i - 1]);
  }

 private:
  double constant_ = 0.0;
  std::vector<double> radii_;
  std::vector<double> values_;
};

struct VacuumParams {
  double delta_m2 = 1.0;
  double theta_v = 0.1;
  MatterProfile matter;

  void validate() const {
    if (!std::isfinite(delta_m2)) throw ConfigError("vacuum.delta_m2", "must be finite");
    if (!(theta_v >= 0.0 && theta_v <= 1.5707963267948966)) {
      throw ConfigError("vacuum.theta_v", "must lie in [0, pi/2]");
    }
  }
};

/// Packed 2x2 Hermitian matrix.
struct Packed2 {
  double d0 = 0.0;
  double d1 = 0.0;
  double re01 = 0.0;
  double im01 = 0.0;
};

inline HermitianMatrix to_matrix(const Packed2& p) {
  HermitianMatrix m(2);
  m.set_diag(0, p.d0);
  m.set_diag(1, p.d1);
  m.set(0, 1, {p.re01, p.im01});
  return m;
}

inline Packed2 to_packed(const HermitianMatrix& m) {
  if (m.size() != 2) throw UnsupportedError("packed Hamiltonians require n_flavors = 2");
  const auto z = m(0, 1);
  return {m.diag(0), m.diag(1), z.real(), z.imag()};
}

/// Energy-independent part of the vacuum term.
struct MixingCoefficients {
  double cos2 = 1.0;
  double sin2 = 0.0;

  static MixingCoefficients from(const VacuumParams& p) {
    return {std::cos(2.0 * p.theta_v), std::sin(2.0 * p.theta_v)};
  }
};

/// delta m^2 / 4E.
inline double vacuum_frequency(double delta_m2, double energy) { return delta_m2 / (4.0 * energy); }

/// H_vac(E) plus diag(lambda, 0) for neutrinos; conj(H_vac) minus diag(lambda, 0)
/// for antineutrinos.
inline Packed2 vacuum_entries(double omega, MixingCoefficients mix, double lambda, Species s) noexcept {
  const double c = omega * mix.cos2;
  const double sgn = s == Species::neutrino ? 1.0 : -1.0;
  return {-c + sgn * lambda, c, omega * mix.sin2, 0.0};
}

/// Self-coupling term seen by a species: H_nu for neutrinos, -conj(H_nu) for antineutrinos.
inline Packed2 species_potential(const Packed2& h_nu, Species s) noexcept {
  if (s == Species::neutrino) return h_nu;
  return {-h_nu.d0, -h_nu.d1, -h_nu.re01, h_nu.im01};
}

/// (H0 + H_self) * (1 / cos theta).
inline Packed2 effective_entries(const Packed2& h0, const Packed2& h_self, double inv_cos) noexcept {
  return {(h0.d0 + h_self.d0) * inv_cos, (h0.d1 + h_self.d1) * inv_cos, (h0.re01 + h_self.re01) * inv_cos,
          (h0.im01 + h_self.im01) * inv_cos};
}

inline void check_two_flavors(std::size_t n_flavors, const char* what) {
  if (n_flavors != 2) {
    throw UnsupportedError(std::string(what) + ": n_flavors = " + std::to_string(n_flavors) +
                           " is not supported (two-flavor build)");
  }
}

inline HermitianMatrix vacuum_hamiltonian(const VacuumParams& params, double energy, Species s, double r,
                                          std::size_t n_flavors = 2) {
  if (!(energy > 0.0)) throw DomainError("vacuum_hamiltonian: energy must be positive, got " + std::to_string(energy));
  check_two_flavors(n_flavors, "vacuum_hamiltonian");
  return to_matrix(vacuum_entries(vacuum_frequency(params.delta_m2, energy), MixingCoefficients::from(params),
                                  params.matter(r), s));
}

inline HermitianMatrix species_potential(const HermitianMatrix& h_nu, Species s) {
  return to_matrix(species_potential(to_packed(h_nu), s));
}

inline constexpr double kDefaultCosThetaFloor = 1e-6;

inline double inverse_projection(double cos_theta, double cos_theta_floor) {
  if (!(cos_theta > cos_theta_floor)) {
    throw DomainError("tangential singularity: cos(theta) = " + std::to_string(cos_theta) +
                      " <= floor " + std::to_string(cos_theta_floor));
  }
  return 1.0 / cos_theta;
}

/// Generator of radial evolution for a beam at local angle theta:
/// (H0 + H_self) / cos(theta). `h_self` is the species-appropriate self term.
inline HermitianMatrix effective_hamiltonian(const HermitianMatrix& h0, const HermitianMatrix& h_self,
                                             double cos_theta, double cos_theta_floor = kDefaultCosThetaFloor) {
  const double inv_cos = inverse_projection(cos_theta, cos_theta_floor);
  return to_matrix(effective_entries(to_packed(h0), to_packed(h_self), inv_cos));
}

}  // namespace xflat
