#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <array>
#include <cmath>
#include <complex>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "xflat/xflat.hpp"

namespace xflat::testing {

using cplx = std::complex<double>;

/// One beam moving radially (R -> 0 makes cos(theta) == 1 exactly at r >= 1),
/// one energy bin centered on `energy`.
inline Ensemble radial_beam(double energy = 1.0, std::size_t n_energy = 1, double start_radius = 1.0) {
  GridConfig gc;
  gc.n_theta = 1;
  gc.n_phi = 1;
  gc.n_energy = n_energy;
  gc.radius_ns = 1e-10;
  gc.e_min = energy - 0.5;
  gc.e_max = energy - 0.5 + static_cast<double>(n_energy);
  Ensemble e(std::make_shared<const Grid>(Grid::build(gc)), Spectra{}, {0, 1});
  e.set_radius(start_radius);
  return e;
}

inline Physics vacuum_physics(double delta_m2 = 1.0, double theta_v = 0.15) {
  Physics p;
  p.mu0 = 0.0;
  p.vacuum.delta_m2 = delta_m2;
  p.vacuum.theta_v = theta_v;
  return p;
}

/// Closed-form two-flavor vacuum amplitudes of the electron-born state after
/// path length l: exp(-i H l) (1, 0) with H = omega [[-c, s], [s, c]].
inline std::array<cplx, 2> vacuum_amplitudes(double delta_m2, double theta_v, double energy, double l) {
  const double omega = delta_m2 / (4.0 * energy);
  const double c = std::cos(2.0 * theta_v), s = std::sin(2.0 * theta_v);
  const double ph = omega * l;
  return {cplx(std::cos(ph), std::sin(ph) * c), cplx(0.0, -std::sin(ph) * s)};
}

inline double vacuum_survival(double delta_m2, double theta_v, double energy, double l) {
  const double s2 = std::sin(2.0 * theta_v);
  const double p = std::sin(delta_m2 * l / (4.0 * energy));
  return 1.0 - s2 * s2 * p * p;
}

inline double max_amplitude_error(const Ensemble& e, const std::array<cplx, 2>& want, std::size_t k = 0) {
  double err = 0.0;
  for (auto s : kAllSpecies) {
    for (std::size_t c = 0; c < 2; ++c) {
      const cplx got(e.re(s, 0, c)[k], e.im(s, 0, c)[k]);
      err = std::max(err, std::abs(got - want[c]));
    }
  }
  return err;
}

/// Dense reference model of the coupled system: amplitudes as std::complex
/// 2-vectors, geometry recomputed from first principles, self-coupling as the
/// explicit pairwise sum over beams, classical RK4 in r.
class PairwiseReference {
 public:
  PairwiseReference(const Ensemble& e, const Physics& physics)
      : nb_(e.n_beams()), ne_(e.n_energy()), R_(e.grid().radius_ns()), physics_(physics) {
    const Grid& g = e.grid();
    for (std::size_t b = 0; b < nb_; ++b) {
      u_.push_back(g.u_nodes()[e.global_theta(b)]);
      phi_.push_back(g.phi_nodes()[e.phi_index(b)]);
    }
    energies_.assign(g.e_nodes().begin(), g.e_nodes().end());
    for (auto s : kAllSpecies) {
      for (std::size_t b = 0; b < nb_; ++b) {
        for (std::size_t k = 0; k < ne_; ++k) {
          we_.push_back(e.weight(s, EmissionFlavor::electron, b, k));
          wx_.push_back(e.weight(s, EmissionFlavor::heavy, b, k));
          psi_.push_back({cplx(e.re(s, b, 0)[k], e.im(s, b, 0)[k]), cplx(e.re(s, b, 1)[k], e.im(s, b, 1)[k])});
        }
      }
    }
    r_ = e.radius();
  }

  using State = std::vector<std::array<cplx, 2>>;
  using Mat = std::array<std::array<cplx, 2>, 2>;

  std::size_t index(Species s, std::size_t b, std::size_t k) const { return (index_of(s) * nb_ + b) * ne_ + k; }

  std::array<double, 3> direction(std::size_t b, double r) const {
    const double sn = (R_ / r) * std::sqrt(u_[b]);
    const double cs = std::sqrt(1.0 - sn * sn);
    return {cs, sn * std::cos(phi_[b]), sn * std::sin(phi_[b])};
  }

  State rhs(const State& y, double r) const {
    // Flux-weighted density of each beam, summed over energy and species.
    std::vector<Mat> beam_sum(nb_, Mat{});
    for (auto s : kAllSpecies) {
      for (std::size_t b = 0; b < nb_; ++b) {
        for (std::size_t k = 0; k < ne_; ++k) {
          const std::size_t i = index(s, b, k);
          const auto& p = y[i];
          Mat rho{};
          for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 2; ++c) rho[a][c] = p[a] * std::conj(p[c]);
          const cplx tr = rho[0][0] + rho[1][1];
          for (int a = 0; a < 2; ++a) {
            for (int c = 0; c < 2; ++c) {
              const cplx comp = (a == c ? tr : cplx(0.0)) - rho[a][c];
              cplx term = we_[i] * rho[a][c] + wx_[i] * comp;
              if (s == Species::antineutrino) term = -std::conj(term);
              beam_sum[b][a][c] += term;
            }
          }
        }
      }
    }
    State dy(y.size());
    const double g = (R_ / r) * (R_ / r);
    const double ct = std::cos(2.0 * physics_.vacuum.theta_v), st = std::sin(2.0 * physics_.vacuum.theta_v);
    const double lambda = physics_.vacuum.matter(r);
    for (std::size_t i = 0; i < nb_; ++i) {
      const auto vi = direction(i, r);
      Mat hnu{};
      for (std::size_t j = 0; j < nb_; ++j) {
        const auto vj = direction(j, r);
        const double f = 1.0 - (vi[0] * vj[0] + vi[1] * vj[1] + vi[2] * vj[2]);
        for (int a = 0; a < 2; ++a)
          for (int c = 0; c < 2; ++c) hnu[a][c] += f * beam_sum[j][a][c];
      }
      for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 2; ++c) hnu[a][c] *= physics_.mu0 * g;
      for (auto s : kAllSpecies) {
        const double sgn = s == Species::neutrino ? 1.0 : -1.0;
        for (std::size_t k = 0; k < ne_; ++k) {
          const double w = physics_.vacuum.delta_m2 / (4.0 * energies_[k]);
          Mat h{};
          h[0][0] = -w * ct + sgn * lambda;
          h[1][1] = w * ct;
          h[0][1] = h[1][0] = w * st;
          for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 2; ++c) h[a][c] += s == Species::neutrino ? hnu[a][c] : -std::conj(hnu[a][c]);
          const std::size_t idx = index(s, i, k);
          for (int a = 0; a < 2; ++a) {
            const cplx hy = h[a][0] * y[idx][0] + h[a][1] * y[idx][1];
            dy[idx][a] = cplx(0.0, -1.0) * hy / vi[0];
          }
        }
      }
    }
    return dy;
  }

  void rk4(double r_end, std::size_t steps) {
    const double h = (r_end - r_) / static_cast<double>(steps);
    const double r0 = r_;
    auto axpy = [](const State& y, const State& k, double a) {
      State out(y.size());
      for (std::size_t i = 0; i < y.size(); ++i)
        for (int c = 0; c < 2; ++c) out[i][c] = y[i][c] + a * k[i][c];
      return out;
    };
    for (std::size_t n = 0; n < steps; ++n) {
      const double r = r0 + static_cast<double>(n) * h;
      const State k1 = rhs(psi_, r);
      const State k2 = rhs(axpy(psi_, k1, h / 2), r + h / 2);
      const State k3 = rhs(axpy(psi_, k2, h / 2), r + h / 2);
      const State k4 = rhs(axpy(psi_, k3, h), r + h);
      for (std::size_t i = 0; i < psi_.size(); ++i)
        for (int c = 0; c < 2; ++c) psi_[i][c] += (h / 6.0) * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
    }
    r_ = r_end;
  }

  double max_difference(const Ensemble& e) const {
    double d = 0.0;
    for (auto s : kAllSpecies)
      for (std::size_t b = 0; b < nb_; ++b)
        for (std::size_t k = 0; k < ne_; ++k)
          for (std::size_t c = 0; c < 2; ++c) {
            const cplx got(e.re(s, b, c)[k], e.im(s, b, c)[k]);
            d = std::max(d, std::abs(got - psi_[index(s, b, k)][c]));
          }
    return d;
  }

 private:
  std::size_t nb_, ne_;
  double R_;
  Physics physics_;
  std::vector<double> u_, phi_, energies_, we_, wx_;
  State psi_;
  double r_ = 0.0;
};

/// Coupled test problem: 8 theta x 2 phi x 4 E, neutrinos and antineutrinos.
inline Ensemble coupled_ensemble() {
  GridConfig gc;
  gc.n_theta = 8;
  gc.n_phi = 2;
  gc.n_energy = 4;
  gc.radius_ns = 10.0;
  gc.e_min = 5.0;
  gc.e_max = 25.0;
  return Ensemble(std::make_shared<const Grid>(Grid::build(gc)), Spectra{}, {0, 8});
}

inline Physics coupled_physics(double mu0) {
  Physics p;
  p.mu0 = mu0;
  p.vacuum.delta_m2 = 1.0;
  p.vacuum.theta_v = 0.1;
  return p;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("xflat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small distributed run configuration.
inline RunConfig small_run(std::size_t n_theta, std::size_t n_phi, std::size_t n_energy, std::uint64_t steps) {
  RunConfig c;
  c.grid.n_theta = n_theta;
  c.grid.n_phi = n_phi;
  c.grid.n_energy = n_energy;
  c.grid.e_min = 5.0;
  c.grid.e_max = 25.0;
  c.physics.mu0 = 2.0;
  c.steps = steps;
  c.log_interval = steps;
  c.cpu = {"cpu", 1, Weight(1), 1};
  c.phi = {"phi", 0, Weight(3), 1};
  return c;
}

}  // namespace xflat::testing
