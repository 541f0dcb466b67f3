#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "support.hpp"

using namespace xflat;
using namespace xflat::testing;

namespace {

std::shared_ptr<const Grid> grid_of(std::size_t n_theta, std::size_t n_phi, std::size_t n_energy) {
  GridConfig c;
  c.n_theta = n_theta;
  c.n_phi = n_phi;
  c.n_energy = n_energy;
  c.e_min = 5.0;
  c.e_max = 20.0;
  return std::make_shared<const Grid>(Grid::build(c));
}

}  // namespace

TEST(VacuumHamiltonian, PinnedEntries) {
  VacuumParams p;
  p.delta_m2 = 2.5;
  p.theta_v = 0.15;
  const HermitianMatrix h = vacuum_hamiltonian(p, 5.0, Species::neutrino, 10.0);
  // 0.125 cos(0.3) and 0.125 sin(0.3).
  EXPECT_NEAR(h.diag(0), -0.119417061140700752, 1e-16);
  EXPECT_NEAR(h.diag(1), 0.119417061140700752, 1e-16);
  EXPECT_NEAR(h(0, 1).real(), 0.036940025832667447, 1e-16);
  EXPECT_EQ(h(0, 1).imag(), 0.0);
}

TEST(VacuumHamiltonian, NoMixingIsDiagonal) {
  VacuumParams p;
  p.delta_m2 = 4.0;
  p.theta_v = 0.0;
  const HermitianMatrix h = vacuum_hamiltonian(p, 1.0, Species::neutrino, 10.0);
  EXPECT_EQ(h.diag(0), -1.0);
  EXPECT_EQ(h.diag(1), 1.0);
  EXPECT_EQ(h(0, 1), std::complex<double>(0.0));
}

TEST(VacuumHamiltonian, MatterPotentialChangesSignForAntineutrinos) {
  VacuumParams p;
  p.matter = MatterProfile::constant(0.3);
  const HermitianMatrix nu = vacuum_hamiltonian(p, 10.0, Species::neutrino, 10.0);
  const HermitianMatrix nubar = vacuum_hamiltonian(p, 10.0, Species::antineutrino, 10.0);
  EXPECT_DOUBLE_EQ(nu.diag(0) - nubar.diag(0), 0.6);
  EXPECT_EQ(nu.diag(1), nubar.diag(1));
}

TEST(VacuumHamiltonian, RejectsBadInputs) {
  EXPECT_THROW(vacuum_hamiltonian(VacuumParams{}, 0.0, Species::neutrino, 10.0), DomainError);
  EXPECT_THROW(vacuum_hamiltonian(VacuumParams{}, 1.0, Species::neutrino, 10.0, 3), UnsupportedError);
}

TEST(MatterProfile, InterpolatesAndClamps) {
  const MatterProfile m = MatterProfile::table({10.0, 20.0}, {1.0, 3.0});
  EXPECT_EQ(m(5.0), 1.0);
  EXPECT_EQ(m(15.0), 2.0);
  EXPECT_EQ(m(30.0), 3.0);
  EXPECT_THROW(MatterProfile::table({10.0, 10.0}, {1.0, 2.0}), ConfigError);
}

TEST(EffectiveHamiltonian, ScalesByInverseCosine) {
  HermitianMatrix h0(2), hs(2);
  h0.set_diag(0, 1.0);
  hs.set(0, 1, {0.25, -0.5});
  const HermitianMatrix radial = effective_hamiltonian(h0, hs, 1.0);
  EXPECT_EQ(radial.diag(0), 1.0);
  EXPECT_EQ(radial(0, 1), std::complex<double>(0.25, -0.5));
  const HermitianMatrix oblique = effective_hamiltonian(h0, hs, 0.5);
  EXPECT_EQ(oblique.diag(0), 2.0);
  EXPECT_EQ(oblique(1, 0), std::complex<double>(0.5, 1.0));
  EXPECT_THROW(effective_hamiltonian(h0, hs, 1e-7), DomainError);
}

TEST(EffectiveHamiltonian, StandardGridTangentialBoundAtSurface) {
  const Grid g = Grid::build(GridConfig{});
  const double c = g.local_angle(g.n_theta() - 1, g.radius_ns()).cos_theta;
  EXPECT_NEAR(1.0 / c, std::sqrt(20000.0), 1e-9);
}

TEST(SpeciesPotential, AntineutrinosSeeMinusConjugate) {
  HermitianMatrix h(2);
  h.set_diag(0, 0.5);
  h.set(0, 1, {0.1, 0.2});
  const HermitianMatrix a = species_potential(h, Species::antineutrino);
  EXPECT_EQ(a.diag(0), -0.5);
  EXPECT_EQ(a(0, 1), std::complex<double>(-0.1, 0.2));
}

TEST(DensityContribution, MatchesExplicitFormula) {
  Ensemble e = init_ensemble(grid_of(3, 2, 4), Spectra{});
  randomize_amplitudes(e, 21);
  for (auto s : kAllSpecies) {
    for (std::size_t b = 0; b < e.n_beams(); ++b) {
      for (std::size_t k = 0; k < e.n_energy(); ++k) {
        const HermitianMatrix rho = density_matrix(e, s, b, k);
        HermitianMatrix id(2);
        id.set_diag(0, rho.trace());
        id.set_diag(1, rho.trace());
        HermitianMatrix want = e.weight(s, EmissionFlavor::electron, b, k) * rho +
                               e.weight(s, EmissionFlavor::heavy, b, k) * (id - rho);
        if (s == Species::antineutrino) want = -want.conj();
        const HermitianMatrix got = density_contribution(e, s, b, k);
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(std::abs(got(i, j) - want(i, j)), 0.0, 1e-16);
      }
    }
  }
}

TEST(Moments, ZeroWeightsGiveZeroMoments) {
  Spectra sp;
  for (auto& row : sp.table)
    for (auto& f : row) f.luminosity = 0.0;
  const Ensemble e = init_ensemble(grid_of(4, 2, 3), sp);
  EXPECT_TRUE(accumulate_moments(e).is_zero());
}

TEST(Moments, SingleBeamSingleEnergy) {
  Spectra sp;
  sp(Species::neutrino, EmissionFlavor::heavy).luminosity = 0.0;
  sp(Species::antineutrino, EmissionFlavor::electron).luminosity = 0.0;
  sp(Species::antineutrino, EmissionFlavor::heavy).luminosity = 0.0;
  const Ensemble e = init_ensemble(grid_of(1, 1, 1), sp);
  const MomentSet m = accumulate_moments(e);
  const double w = e.weight(Species::neutrino, EmissionFlavor::electron, 0, 0);
  const Direction v = e.grid().direction(0, 0, e.radius());
  const Packed2 m0 = m[Species::neutrino].m0.rounded();
  EXPECT_EQ(m0.d0, w);
  EXPECT_EQ(m0.d1, 0.0);
  EXPECT_EQ(m0.re01, 0.0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(m[Species::neutrino].m1[c].rounded().d0, w * v[c]);
  EXPECT_TRUE(m[Species::antineutrino].m0.is_zero());
}

TEST(Moments, EqualCorrectlyRoundedNaiveSum) {
  using mp = boost::multiprecision::cpp_bin_float_50;
  Ensemble e = init_ensemble(grid_of(5, 3, 4), Spectra{});
  randomize_amplitudes(e, 33);
  e.set_radius(13.7);
  const MomentSet m = accumulate_moments(e);
  for (auto s : kAllSpecies) {
    std::array<std::array<mp, 4>, 4> naive{};  // [m0, m1x, m1y, m1z][entry]
    for (std::size_t b = 0; b < e.n_beams(); ++b) {
      const Direction v = e.grid().direction(e.global_theta(b), e.phi_index(b), 13.7);
      for (std::size_t k = 0; k < e.n_energy(); ++k) {
        const Packed2 c = to_packed(density_contribution(e, s, b, k));
        const double entries[4] = {c.d0, c.d1, c.re01, c.im01};
        for (int q = 0; q < 4; ++q) {
          naive[0][q] += mp(entries[q]);
          for (int a = 0; a < 3; ++a) naive[1 + a][q] += mp(entries[q]) * v[a];
        }
      }
    }
    const auto& sm = m[s];
    const Packed2 got[4] = {sm.m0.rounded(), sm.m1[0].rounded(), sm.m1[1].rounded(), sm.m1[2].rounded()};
    for (int t = 0; t < 4; ++t) {
      EXPECT_EQ(got[t].d0, static_cast<double>(naive[t][0]));
      EXPECT_EQ(got[t].d1, static_cast<double>(naive[t][1]));
      EXPECT_EQ(got[t].re01, static_cast<double>(naive[t][2]));
      EXPECT_EQ(got[t].im01, static_cast<double>(naive[t][3]));
    }
  }
}

TEST(Moments, AdditiveOverDisjointRanges) {
  Ensemble e = init_ensemble(grid_of(24, 2, 3), Spectra{});
  randomize_amplitudes(e, 8);
  const double r = e.radius();
  const MomentSet all = accumulate_moments(e);
  const MomentSet parts = accumulate_moments(e, {0, 16}, r) + accumulate_moments(e, {16, 8}, r);
  for (auto s : kAllSpecies) {
    const Packed2 a = all[s].m0.rounded(), b = parts[s].m0.rounded();
    EXPECT_NEAR(a.d0, b.d0, 1e-15);
    EXPECT_NEAR(a.re01, b.re01, 1e-15);
  }
}

TEST(Moments, RadiusMustMatchState) {
  const Ensemble e = init_ensemble(grid_of(4, 2, 3), Spectra{});
  EXPECT_THROW(accumulate_moments(e, e.slice(), 11.0), IntegrityError);
  const MomentSet m = accumulate_moments(e);
  EXPECT_THROW(neutrino_potential(m, kRadialDirection, 11.0, 1.0, 10.0), IntegrityError);
  MomentSet other = m;
  other.radius = 11.0;
  EXPECT_THROW(other += m, IntegrityError);
}

TEST(NeutrinoPotential, ZeroMomentsGiveZero) {
  MomentSet m;
  m.radius = 20.0;
  const HermitianMatrix h = neutrino_potential(m, kRadialDirection, 20.0, 1.0, 10.0);
  EXPECT_EQ(h.frobenius_norm(), 0.0);
}

TEST(NeutrinoPotential, SingleBeamDoesNotInteractWithItself) {
  Ensemble e = init_ensemble(grid_of(1, 1, 3), Spectra{});
  randomize_amplitudes(e, 2);
  const MomentSet m = accumulate_moments(e);
  const Direction v = e.grid().direction(0, 0, e.radius());
  const HermitianMatrix h = neutrino_potential(m, v, e.radius(), 1.0, 10.0);
  const double scale = m[Species::neutrino].m0.rounded().d0;
  EXPECT_LT(h.frobenius_norm(), 1e-15 * std::abs(scale));
}

TEST(NeutrinoPotential, TwoBeamsPairwise) {
  Ensemble e = init_ensemble(grid_of(2, 1, 1), Spectra{});
  randomize_amplitudes(e, 4);
  const double r = 15.0;
  e.set_radius(r);
  const MomentSet m = accumulate_moments(e);
  const Direction v0 = e.grid().direction(0, 0, r), v1 = e.grid().direction(1, 0, r);
  const double f = 1.0 - (v0[0] * v1[0] + v0[1] * v1[1] + v0[2] * v1[2]);
  HermitianMatrix c1 = density_contribution(e, Species::neutrino, 1, 0) + density_contribution(e, Species::antineutrino, 1, 0);
  const HermitianMatrix want = c1 * (f * 2.0 * (10.0 / r) * (10.0 / r));
  const HermitianMatrix got = neutrino_potential(m, v0, r, 2.0, 10.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(std::abs(got(i, j) - want(i, j)), 0.0, 1e-15);
}

TEST(NeutrinoPotential, HermitianForAnyState) {
  Ensemble e = init_ensemble(grid_of(4, 3, 3), Spectra{});
  randomize_amplitudes(e, 10);
  const MomentSet m = accumulate_moments(e);
  const HermitianMatrix h = neutrino_potential(m, e.grid().direction(2, 1, e.radius()), e.radius(), 1.0, 10.0);
  EXPECT_EQ(h(0, 1), std::conj(h(1, 0)));
}
