#include <gtest/gtest.h>

#include <cmath>
#include <complex>

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

TEST(Derivative, ZeroHamiltonianGivesZero) {
  Ensemble e = radial_beam();
  Physics p = vacuum_physics(0.0, 0.0);
  const AmplitudeBuffer d = derivative(e, 1.0, accumulate_moments(e), p);
  for (double x : d.data()) EXPECT_EQ(x, 0.0);
}

TEST(Derivative, MaximalMixingExample) {
  // H = 0.25 sigma_x on (1, 0) gives -i H psi = (0, -0.25 i).
  Ensemble e = radial_beam();
  const Physics p = vacuum_physics(1.0, std::numbers::pi / 4);
  const AmplitudeBuffer d = derivative(e, 1.0, accumulate_moments(e), p);
  EXPECT_NEAR(d.re(Species::neutrino, 0, 0)[0], 0.0, 1e-16);
  EXPECT_NEAR(d.im(Species::neutrino, 0, 0)[0], 0.0, 1e-16);
  EXPECT_EQ(d.re(Species::neutrino, 0, 1)[0], 0.0);
  EXPECT_EQ(d.im(Species::neutrino, 0, 1)[0], -0.25);
}

TEST(Derivative, MatchesComplexMatrixProduct) {
  Ensemble e = init_ensemble(grid_of(6, 3, 5), Spectra{});
  randomize_amplitudes(e, 17);
  const double r = 14.0;
  e.set_radius(r);
  Physics p;
  p.mu0 = 3.0;
  p.vacuum.matter = MatterProfile::constant(0.05);
  const MomentSet m = accumulate_moments(e);
  const AmplitudeBuffer d = derivative(e, r, m, p);
  double worst = 0.0;
  for (std::size_t b = 0; b < e.n_beams(); ++b) {
    const Direction v = e.grid().direction(e.global_theta(b), e.phi_index(b), r);
    const HermitianMatrix hnu = neutrino_potential(m, v, r, p.mu0, 10.0);
    for (auto s : kAllSpecies) {
      for (std::size_t k = 0; k < e.n_energy(); ++k) {
        const HermitianMatrix h = effective_hamiltonian(
            vacuum_hamiltonian(p.vacuum, e.grid().e_nodes()[k], s, r), species_potential(hnu, s), v[0]);
        const cplx y0(e.re(s, b, 0)[k], e.im(s, b, 0)[k]), y1(e.re(s, b, 1)[k], e.im(s, b, 1)[k]);
        const cplx want[2] = {cplx(0, -1) * (h(0, 0) * y0 + h(0, 1) * y1), cplx(0, -1) * (h(1, 0) * y0 + h(1, 1) * y1)};
        for (std::size_t c = 0; c < 2; ++c) {
          worst = std::max(worst, ulp_distance(d.re(s, b, c)[k], want[c].real()));
          worst = std::max(worst, ulp_distance(d.im(s, b, c)[k], want[c].imag()));
        }
      }
    }
  }
  EXPECT_LE(worst, 2.0);
}

TEST(Derivative, StaleMomentsAreRejected) {
  Ensemble e = radial_beam();
  MomentSet m = accumulate_moments(e);
  EXPECT_THROW(derivative(e, 1.5, m, vacuum_physics()), IntegrityError);
}

TEST(MidpointStep, ZeroHamiltonianOnlyAdvancesRadius) {
  Ensemble e = radial_beam();
  randomize_amplitudes(e, 1);
  const AmplitudeBuffer before = e.amplitudes();
  modified_midpoint_step(e, vacuum_physics(0.0, 0.0), StepConfig{});
  EXPECT_EQ(e.amplitudes(), before);
  EXPECT_EQ(e.radius(), 1.05);
}

TEST(MidpointStep, EveryEvaluationUsesFreshMoments) {
  Ensemble e = init_ensemble(grid_of(4, 2, 3), Spectra{});
  Physics p;
  p.mu0 = 1.0;
  std::vector<std::pair<double, double>> calls;
  EvolveOptions opts;
  opts.trace = [&](double mr, double er) { calls.emplace_back(mr, er); };
  const auto d = evolve_steps(e, 3, p, StepConfig{}, opts);
  ASSERT_EQ(calls.size(), 3u * 9u);
  EXPECT_EQ(d.rhs_evaluations, 27u);
  for (const auto& [mr, er] : calls) EXPECT_EQ(mr, er);
  EXPECT_EQ(calls[0].second, 10.0);
  EXPECT_EQ(calls[8].second, 10.05);
}

TEST(MidpointStep, ProviderAtWrongRadiusIsAnError) {
  Ensemble e = init_ensemble(grid_of(4, 2, 3), Spectra{});
  EvolveOptions opts;
  opts.moments = [&](const AmplitudeBuffer&, double) {
    MomentSet m;
    m.radius = 10.0;
    return m;
  };
  EXPECT_THROW(evolve_steps(e, 1, Physics{}, StepConfig{}, opts), IntegrityError);
}

TEST(MidpointStep, VacuumErrorIsSecondOrder) {
  double err[2];
  for (int i = 0; i < 2; ++i) {
    Ensemble e = radial_beam();
    const std::uint64_t n = i == 0 ? 100 : 200;
    StepConfig step;
    step.h = 2 * std::numbers::pi / static_cast<double>(n);
    evolve_steps(e, n, vacuum_physics(), step);
    err[i] = max_amplitude_error(e, vacuum_amplitudes(1.0, 0.15, 1.0, e.radius() - 1.0));
  }
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.2);
}

TEST(MidpointStep, ThreadCountDoesNotChangeBits) {
  AmplitudeBuffer out[2];
  for (int i = 0; i < 2; ++i) {
    Ensemble e = init_ensemble(grid_of(9, 2, 4), Spectra{});
    Physics p;
    p.mu0 = 4.0;
    EvolveOptions opts;
    opts.threads = i == 0 ? 1 : 3;
    opts.moments = serial_moments(e, kDefaultChunkSize, opts.threads);
    evolve_steps(e, 10, p, StepConfig{}, opts);
    out[i] = e.amplitudes();
  }
  EXPECT_EQ(out[0], out[1]);
}

TEST(Evolve, NoStepsWhenAlreadyThere) {
  Ensemble e = radial_beam();
  const auto d = evolve(e, 1.0, vacuum_physics(), StepConfig{});
  EXPECT_EQ(d.steps, 0u);
  EXPECT_THROW(evolve(e, 0.5, vacuum_physics(), StepConfig{}), DomainError);
}

TEST(Evolve, ObserverCadence) {
  Ensemble e = radial_beam();
  std::vector<std::uint64_t> seen;
  EvolveOptions opts;
  opts.observers.push_back({"count", 100, [&](const Ensemble&, std::uint64_t s) { seen.push_back(s); }});
  const auto d = evolve_steps(e, 1000, vacuum_physics(), StepConfig{}, opts);
  EXPECT_EQ(d.steps, 1000u);
  ASSERT_EQ(seen.size(), 10u);
  EXPECT_EQ(seen.front(), 100u);
  EXPECT_EQ(seen.back(), 1000u);
  EXPECT_DOUBLE_EQ(d.r_final, 51.0);
}

TEST(Evolve, ObserverFailureNamesObserverAndStep) {
  Ensemble e = radial_beam();
  EvolveOptions opts;
  opts.observers.push_back({"probe", 3, [](const Ensemble&, std::uint64_t) { throw std::runtime_error("disk full"); }});
  try {
    evolve_steps(e, 5, vacuum_physics(), StepConfig{}, opts);
    FAIL();
  } catch (const Error& err) {
    EXPECT_NE(std::string(err.what()).find("'probe' failed at step 3"), std::string::npos) << err.what();
  }
}

TEST(Evolve, StopRequestEndsEarly) {
  Ensemble e = radial_beam();
  EvolveOptions opts;
  opts.stop = [](std::uint64_t done) { return done == 4; };
  EXPECT_EQ(evolve_steps(e, 100, vacuum_physics(), StepConfig{}, opts).steps, 4u);
}

TEST(Evolve, NonFiniteStateIsABlowup) {
  Ensemble e = radial_beam();
  e.re(Species::neutrino, 0, 1)[0] = std::nan("");
  try {
    evolve_steps(e, 5, vacuum_physics(), StepConfig{});
    FAIL();
  } catch (const BlowupError& err) {
    EXPECT_NE(std::string(err.what()).find("1"), std::string::npos);
  }
}

TEST(Evolve, RenormalizationCadence) {
  Ensemble e = radial_beam();
  e.re(Species::neutrino, 0, 0)[0] = 1.001;
  StepConfig step;
  step.renormalize_every = 5;
  const auto d = evolve_steps(e, 5, vacuum_physics(), step);
  EXPECT_GT(d.max_renormalized, 9e-4);
  EXPECT_LT(max_norm_deviation(e), 1e-15);
}

TEST(Evolve, RadiiDoNotAccumulateRounding) {
  Ensemble e = radial_beam();
  evolve_steps(e, 3000, vacuum_physics(), StepConfig{});
  EXPECT_EQ(e.radius(), 1.0 + 3000.0 * 0.05);
}

TEST(StepConfig, ValidationNamesField) {
  StepConfig s;
  s.h = 0.0;
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "step.h");
  }
}
