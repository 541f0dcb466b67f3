#pragma once

// Built-in oracle checks run by `xflat validate`.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "xflat/config.hpp"
#include "xflat/driver.hpp"
#include "xflat/integrator.hpp"
#include "xflat/moments.hpp"
#include "xflat/state.hpp"

namespace xflat {

/// Fills every amplitude vector with a random unit vector (seeded).
inline void randomize_amplitudes(Ensemble& e, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& buf = e.amplitudes();
  const auto& L = buf.layout();
  for (auto s : kAllSpecies) {
    for (std::size_t b = 0; b < L.n_beams; ++b) {
      for (std::size_t k = 0; k < L.n_energy; ++k) {
        std::vector<double> v(2 * L.n_flavors);
        double n2 = 0.0;
        for (double& x : v) {
          x = normal(rng);
          n2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(n2);
        for (std::size_t c = 0; c < L.n_flavors; ++c) {
          buf.re(s, b, c)[k] = v[2 * c] * inv;
          buf.im(s, b, c)[k] = v[2 * c + 1] * inv;
        }
      }
    }
  }
}

/// Distance in units in the last place of `expected`.
inline double ulp_distance(double actual, double expected) {
  if (actual == expected) return 0.0;
  const double mag = std::abs(expected);
  const double ulp = mag == 0.0 ? std::numeric_limits<double>::denorm_min()
                                : std::nextafter(mag, std::numeric_limits<double>::infinity()) - mag;
  return std::abs(actual - expected) / ulp;
}

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Single radial beam in vacuum against P = 1 - sin^2(2 theta) sin^2(dm2 l / 4E).
inline ValidationCheck validate_vacuum() {
  GridConfig gc;
  gc.n_theta = 1;
  gc.n_phi = 1;
  gc.n_energy = 1;
  gc.radius_ns = 1e-10;
  gc.e_min = 0.5;
  gc.e_max = 1.5;
  Ensemble e(std::make_shared<const Grid>(Grid::build(gc)), Spectra{}, {0, 1});
  e.set_radius(1.0);
  Physics physics;
  physics.mu0 = 0.0;
  physics.vacuum.delta_m2 = 1.0;
  physics.vacuum.theta_v = 0.15;
  StepConfig step;
  step.h = 2.0 * std::numbers::pi / 125.0;
  const auto d = evolve_steps(e, 125, physics, step);
  const double path = d.r_final - 1.0;
  const double phase = physics.vacuum.delta_m2 * path / 4.0;
  const double s2 = std::sin(2.0 * physics.vacuum.theta_v);
  const double expected = 1.0 - s2 * s2 * std::sin(phase) * std::sin(phase);
  const double got = survival_probability(e, Species::neutrino, 0, 0, 0);
  const double err = std::abs(got - expected);
  char buf[160];
  std::snprintf(buf, sizeof buf, "P = %.13f, analytic %.13f, |diff| = %.2e (limit 1e-8)", got, expected, err);
  return {"vacuum survival probability", err < 1e-8, buf};
}

/// Moment-factorized H_nu against the pairwise sum evaluated in 50 digits.
inline ValidationCheck validate_potential(std::uint64_t seed, std::size_t trials = 20) {
  using mp = boost::multiprecision::cpp_bin_float_50;
  GridConfig gc;
  gc.n_theta = 4;
  gc.n_phi = 2;
  gc.n_energy = 3;
  gc.e_min = 5.0;
  gc.e_max = 20.0;
  const auto grid = std::make_shared<const Grid>(Grid::build(gc));
  const double mu0 = 0.7;
  double worst = 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius_dist(gc.radius_ns, 5.0 * gc.radius_ns);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Ensemble e(grid, Spectra{}, {0, gc.n_theta});
    randomize_amplitudes(e, rng());
    const double r = radius_dist(rng);
    e.set_radius(r);
    const MomentSet m = accumulate_moments(e);
    for (std::size_t i = 0; i < e.n_beams(); ++i) {
      const Direction vi = grid->direction(e.global_theta(i), e.phi_index(i), r);
      const Packed2 got = to_packed(neutrino_potential(m, vi, r, mu0, gc.radius_ns));
      std::array<mp, 4> exact{};
      for (std::size_t j = 0; j < e.n_beams(); ++j) {
        const Direction vj = grid->direction(e.global_theta(j), e.phi_index(j), r);
        const mp factor = mp(1) - (mp(vi[0]) * vj[0] + mp(vi[1]) * vj[1] + mp(vi[2]) * vj[2]);
        for (auto s : kAllSpecies) {
          for (std::size_t k = 0; k < e.n_energy(); ++k) {
            const Packed2 c = to_packed(density_contribution(e, s, j, k));
            exact[0] += factor * c.d0;
            exact[1] += factor * c.d1;
            exact[2] += factor * c.re01;
            exact[3] += factor * c.im01;
          }
        }
      }
      const mp g = mp(gc.radius_ns) / r;
      const mp scale = mp(mu0) * g * g;
      const double want[4] = {static_cast<double>(exact[0] * scale), static_cast<double>(exact[1] * scale),
                              static_cast<double>(exact[2] * scale), static_cast<double>(exact[3] * scale)};
      const double have[4] = {got.d0, got.d1, got.re01, got.im01};
      for (int q = 0; q < 4; ++q) worst = std::max(worst, ulp_distance(have[q], want[q]));
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max deviation %.2f ulp over %zu random ensembles (limit 4)", worst, trials);
  return {"neutrino potential vs pairwise sum", worst <= 4.0, buf};
}

/// Same configuration on 1 rank x 1 thread and 4 ranks x 2 threads.
inline ValidationCheck validate_determinism() {
  RunConfig c;
  c.grid.n_theta = 20;
  c.grid.n_phi = 2;
  c.grid.n_energy = 4;
  c.grid.e_min = 5.0;
  c.grid.e_max = 25.0;
  c.physics.mu0 = 5.0;
  c.steps = 20;
  c.log_interval = 1000;
  c.io.mode = IoMode::off;
  c.cpu = {"cpu", 1, Weight(1), 1};
  c.phi = {"phi", 0, Weight(3), 1};
  const RunResult a = run_simulation(c);
  c.cpu = {"cpu", 2, Weight(1), 2};
  c.phi = {"phi", 2, Weight(3), 2};
  const RunResult b = run_simulation(c);
  const bool same = a.state == b.state && a.r_final == b.r_final;
  return {"determinism across ranks and threads", same,
          same ? "final states bitwise identical (1x1 vs 4x2)" : "final states differ between 1x1 and 4x2 runs"};
}

inline std::vector<ValidationCheck> run_validation(std::uint64_t seed = 0) {
  return {validate_vacuum(), validate_potential(seed), validate_determinism()};
}

}  // namespace xflat
