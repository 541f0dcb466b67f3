#pragma once

// Radial evolution of the coupled ensemble with Gragg's modified midpoint
// method. Every right-hand-side evaluation first obtains the global moments of
// the state being differentiated (phase 1, read-only), then updates disjoint
// theta rows (phase 2).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xflat/error.hpp"
#include "xflat/grid.hpp"
#include "xflat/hamiltonian.hpp"
#include "xflat/moments.hpp"
#include "xflat/state.hpp"

namespace xflat {

struct StepConfig {
  double h = 0.05;
  std::size_t n_substeps = 8;
  std::size_t renormalize_every = 0;
  double cos_theta_floor = kDefaultCosThetaFloor;

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("step.h", "must be positive and finite");
    if (n_substeps < 2 || n_substeps % 2 != 0) throw ConfigError("step.n_substeps", "must be even and >= 2");
    if (!(cos_theta_floor >= 0.0 && cos_theta_floor < 1.0)) {
      throw ConfigError("step.cos_theta_floor", "must lie in [0, 1)");
    }
  }
};

struct Physics {
  VacuumParams vacuum;
  double mu0 = 1.0;

  void validate() const {
    vacuum.validate();
    if (!std::isfinite(mu0)) throw ConfigError("coupling.mu0", "must be finite");
  }
};

/// Global moments of a substep state `z` (laid out like the local ensemble) at
/// radius r. Distributed runs exchange partial sums inside the provider.
using MomentProvider = std::function<MomentSet(const AmplitudeBuffer& z, double r)>;

/// Moments of an ensemble that owns every theta bin of its grid.
inline MomentProvider serial_moments(const Ensemble& e, std::size_t chunk_size = kDefaultChunkSize, int threads = 1) {
  return [&e, chunk_size, threads](const AmplitudeBuffer& z, double r) {
    const RankMoments rm = local_chunk_pieces(z, e, e.slice(), r, chunk_size, threads);
    return reduce_moments(std::span<const RankMoments>(&rm, 1), chunk_size);
  };
}

/// dpsi/dr = -i H_eff psi, evaluated row by row.
class RhsKernel {
 public:
  RhsKernel(const Ensemble& e, const Physics& physics, double cos_theta_floor)
      : e_(e), physics_(physics), mix_(MixingCoefficients::from(physics.vacuum)), floor_(cos_theta_floor) {
    check_two_flavors(e.n_flavors(), "integrator");
    const auto energies = e.grid().e_nodes();
    omega_.resize(energies.size());
    for (std::size_t k = 0; k < energies.size(); ++k) {
      if (!(energies[k] > 0.0)) throw DomainError("energy bin " + std::to_string(k) + " is not positive");
      omega_[k] = vacuum_frequency(physics.vacuum.delta_m2, energies[k]);
    }
  }

  /// Derivative of local theta row `t` of `z` into the same row of `out`.
  void row(const AmplitudeBuffer& z, const MomentSet& m, double r, std::size_t t, AmplitudeBuffer& out) const {
    const Grid& g = e_.grid();
    const std::size_t theta = e_.slice().begin + t;
    const double lambda = physics_.vacuum.matter(r);
    const std::size_t n = omega_.size();
    for (std::size_t p = 0; p < g.n_phi(); ++p) {
      const std::size_t b = e_.beam(t, p);
      const Direction v = g.direction(theta, p, r);
      const double inv_cos = inverse_projection(v[0], floor_);
      const Packed2 h_nu = neutrino_potential_packed(m, v, physics_.mu0, g.radius_ns());
      for (auto s : kAllSpecies) {
        const Packed2 hs = species_potential(h_nu, s);
        const double* re0 = z.re(s, b, 0).data();
        const double* im0 = z.im(s, b, 0).data();
        const double* re1 = z.re(s, b, 1).data();
        const double* im1 = z.im(s, b, 1).data();
        double* dre0 = out.re(s, b, 0).data();
        double* dim0 = out.im(s, b, 0).data();
        double* dre1 = out.re(s, b, 1).data();
        double* dim1 = out.im(s, b, 1).data();
        for (std::size_t k = 0; k < n; ++k) {
          const Packed2 h = effective_entries(vacuum_entries(omega_[k], mix_, lambda, s), hs, inv_cos);
          const double y0r = h.d0 * re0[k] + (h.re01 * re1[k] - h.im01 * im1[k]);
          const double y0i = h.d0 * im0[k] + (h.re01 * im1[k] + h.im01 * re1[k]);
          const double y1r = (h.re01 * re0[k] + h.im01 * im0[k]) + h.d1 * re1[k];
          const double y1i = (h.re01 * im0[k] + (-h.im01) * re0[k]) + h.d1 * im1[k];
          dre0[k] = y0i;
          dim0[k] = -y0r;
          dre1[k] = y1i;
          dim1[k] = -y1r;
        }
      }
    }
  }

  /// Contiguous [begin, end) index ranges of local theta row t, one per species.
  std::array<std::pair<std::size_t, std::size_t>, kSpeciesCount> row_extent(std::size_t t) const {
    const auto& L = e_.amplitudes().layout();
    std::array<std::pair<std::size_t, std::size_t>, kSpeciesCount> out;
    for (auto s : kAllSpecies) {
      const std::size_t begin = L.offset(s, e_.beam(t, 0), 0);
      out[index_of(s)] = {begin, begin + e_.grid().n_phi() * L.n_flavors * 2 * L.n_energy};
    }
    return out;
  }

 private:
  const Ensemble& e_;
  Physics physics_;
  MixingCoefficients mix_;
  double floor_;
  std::vector<double> omega_;
};

/// Derivative of the ensemble's own amplitudes at radius r.
inline AmplitudeBuffer derivative(const Ensemble& e, double r, const MomentSet& moments, const Physics& physics,
                                  double cos_theta_floor = kDefaultCosThetaFloor) {
  if (moments.radius != r) {
    throw IntegrityError("derivative: moments computed at r = " + std::to_string(moments.radius) + ", state at r = " +
                         std::to_string(r));
  }
  const RhsKernel kernel(e, physics, cos_theta_floor);
  AmplitudeBuffer out(e.amplitudes().layout());
  for (std::size_t t = 0; t < e.n_theta_local(); ++t) kernel.row(e.amplitudes(), moments, r, t, out);
  return out;
}

/// Called for every right-hand-side evaluation with the radius tag of the
/// moments used and the radius the derivative was evaluated at.
using MomentTrace = std::function<void(double moments_radius, double eval_radius)>;

class MidpointStepper {
 public:
  MidpointStepper(Ensemble& e, const Physics& physics, const StepConfig& config, MomentProvider moments,
                  int threads = 1)
      : e_(e),
        config_(config),
        kernel_(e, physics, config.cos_theta_floor),
        moments_(std::move(moments)),
        threads_(std::max(1, threads)),
        za_(e.amplitudes().layout()),
        zb_(e.amplitudes().layout()),
        dz_(e.amplitudes().layout()) {
    physics.validate();
    config.validate();
    if (!moments_) moments_ = serial_moments(e);
  }

  void set_trace(MomentTrace trace) { trace_ = std::move(trace); }
  std::uint64_t rhs_evaluations() const noexcept { return rhs_evaluations_; }
  const StepConfig& config() const noexcept { return config_; }

  /// Advances the ensemble from r to r + h; the ensemble radius becomes r_next
  /// (r + h, or a more accurate value computed by the caller).
  void step(double r, double h, double r_next) {
    const std::size_t n = config_.n_substeps;
    const double hp = h / static_cast<double>(n);
    const double two_hp = 2.0 * hp;

    auto src = e_.amplitudes().data();
    std::copy(src.begin(), src.end(), za_.data().begin());

    // z1 = z0 + h' f(r, z0)
    apply(za_, r, [&](std::size_t i) { zb_.data()[i] = za_.data()[i] + hp * dz_.data()[i]; });
    // z_{m+1} = z_{m-1} + 2h' f(r + m h', z_m)
    for (std::size_t m = 1; m < n; ++m) {
      apply(zb_, r + static_cast<double>(m) * hp, [&](std::size_t i) { za_.data()[i] += two_hp * dz_.data()[i]; });
      std::swap(za_, zb_);
    }
    // psi(r + h) = (z_n + z_{n-1} + h' f(r + h, z_n)) / 2
    auto dst = e_.amplitudes().data();
    apply(zb_, r + h, [&](std::size_t i) { dst[i] = 0.5 * (zb_.data()[i] + za_.data()[i] + hp * dz_.data()[i]); });
    e_.set_radius(r_next);
  }

 private:
  template <class Update>
  void apply(const AmplitudeBuffer& z, double r, Update&& update) {
    const MomentSet m = moments_(z, r);
    ++rhs_evaluations_;
    if (trace_) trace_(m.radius, r);
    if (m.radius != r) {
      throw IntegrityError("stale moments: computed at r = " + std::to_string(m.radius) + ", needed at r = " +
                           std::to_string(r));
    }
    const std::size_t rows = e_.n_theta_local();
    std::exception_ptr error;
#pragma omp parallel for schedule(static, 1) num_threads(threads_)
    for (std::size_t t = 0; t < rows; ++t) {
      try {
        kernel_.row(z, m, r, t, dz_);
        for (const auto& [begin, end] : kernel_.row_extent(t)) {
          for (std::size_t i = begin; i < end; ++i) update(i);
        }
      } catch (...) {
#pragma omp critical(xflat_rhs_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }

  Ensemble& e_;
  StepConfig config_;
  RhsKernel kernel_;
  MomentProvider moments_;
  int threads_;
  AmplitudeBuffer za_, zb_, dz_;
  MomentTrace trace_;
  std::uint64_t rhs_evaluations_ = 0;
};

/// Advances the ensemble by one step of size config.h.
inline void modified_midpoint_step(Ensemble& e, const Physics& physics, const StepConfig& config,
                                   MomentProvider moments = nullptr) {
  MidpointStepper stepper(e, physics, config, std::move(moments));
  const double r = e.radius();
  stepper.step(r, config.h, r + config.h);
}

struct Observer {
  std::string name;
  std::uint64_t interval = 1;
  std::function<void(const Ensemble&, std::uint64_t step)> fn;
};

struct EvolveOptions {
  std::vector<Observer> observers;
  /// Checked after every step; returning true ends the run early.
  std::function<bool(std::uint64_t steps_done)> stop;
  MomentProvider moments;
  int threads = 1;
  MomentTrace trace;
  /// Step index of the first step taken (for resumed runs and observer cadence).
  std::uint64_t first_step = 0;
};

struct Diagnostics {
  std::uint64_t steps = 0;
  double max_norm_drift = 0.0;
  double max_renormalized = 0.0;
  double wall_seconds = 0.0;
  double r_final = 0.0;
  std::uint64_t rhs_evaluations = 0;
};

/// Number of fixed steps of size h needed to reach r_end from r.
inline std::uint64_t step_count(double r, double r_end, double h) {
  if (r_end <= r) return 0;
  return static_cast<std::uint64_t>(std::ceil((r_end - r) / h - 1e-9));
}

/// Non-finite amplitudes raise BlowupError; returns max |norm - 1|.
inline double check_state(const Ensemble& e, std::uint64_t step) {
  const double drift = max_norm_deviation(e);
  if (!std::isfinite(drift)) throw BlowupError(step, "non-finite amplitude at r = " + std::to_string(e.radius()));
  return drift;
}

/// Takes exactly n_steps fixed steps. Radii are r0 + i h, so rounding does not
/// accumulate over long runs.
inline Diagnostics evolve_steps(Ensemble& e, std::uint64_t n_steps, const Physics& physics, const StepConfig& config,
                                EvolveOptions options = {}) {
  const auto start = std::chrono::steady_clock::now();
  const double r0 = e.radius();
  MidpointStepper stepper(e, physics, config, options.moments, options.threads);
  if (options.trace) stepper.set_trace(options.trace);
  for (const auto& o : options.observers) {
    if (o.interval == 0) throw ConfigError("observer " + o.name, "interval must be >= 1");
  }

  Diagnostics d;
  for (std::uint64_t i = 0; i < n_steps; ++i) {
    const double r = r0 + static_cast<double>(i) * config.h;
    const double r_next = r0 + static_cast<double>(i + 1) * config.h;
    const std::uint64_t step = options.first_step + i + 1;
    stepper.step(r, config.h, r_next);
    d.max_norm_drift = std::max(d.max_norm_drift, check_state(e, step));
    if (config.renormalize_every > 0 && step % config.renormalize_every == 0) {
      d.max_renormalized = std::max(d.max_renormalized, renormalize(e));
    }
    ++d.steps;
    for (const auto& o : options.observers) {
      if (step % o.interval != 0) continue;
      try {
        o.fn(e, step);
      } catch (const Error&) {
        throw;
      } catch (const std::exception& ex) {
        throw Error(ErrorCategory::runtime, "observer '" + o.name + "' failed at step " + std::to_string(step) + ": " +
                                                ex.what());
      }
    }
    if (options.stop && options.stop(d.steps)) break;
  }
  d.r_final = e.radius();
  d.rhs_evaluations = stepper.rhs_evaluations();
  d.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return d;
}

/// Steps until the radius reaches r_end.
inline Diagnostics evolve(Ensemble& e, double r_end, const Physics& physics, const StepConfig& config,
                          EvolveOptions options = {}) {
  const double r0 = e.radius();
  if (r_end < r0) {
    throw DomainError("evolve: r_end = " + std::to_string(r_end) + " is behind the current radius " + std::to_string(r0));
  }
  config.validate();
  return evolve_steps(e, step_count(r0, r_end, config.h), physics, config, std::move(options));
}

}  // namespace xflat
