#pragma once

// Throughput microkernels (threads x iterations x width loops) and the
// steps-per-second harness.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "xflat/config.hpp"
#include "xflat/driver.hpp"
#include "xflat/error.hpp"
#include "xflat/integrator.hpp"
#include "xflat/moments.hpp"
#include "xflat/topology.hpp"

namespace xflat {

/// Floating-point operations per lane per iteration of the flops kernel (one
/// multiply, one add).
inline constexpr std::uint64_t kFlopsPerElement = 2;

struct BenchReport {
  std::string kernel;
  std::size_t width = 0;
  std::size_t threads = 0;
  std::uint64_t iterations = 0;
  double elapsed_s = 0.0;
  /// GFLOP/s, million evaluations/s or steps/s depending on the kernel.
  double rate = 0.0;
  double checksum = 0.0;
  /// Exact operation count: flops, evaluations or steps.
  std::uint64_t work = 0;
  std::size_t ranks = 0;
  std::size_t waves = 0;
  std::string config_hash;
  std::string timestamp;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline const char* kCsvHeader = "kernel,width,threads,iterations,elapsed_s,rate,checksum";

/// One CSV row. Steps reports append ranks and waves.
inline std::string csv_row(const BenchReport& r, bool with_plan = false) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%llu,%.6f,%.6g,%.17g", r.kernel.c_str(), r.width, r.threads,
                static_cast<unsigned long long>(r.iterations), r.elapsed_s, r.rate, r.checksum);
  std::string row = buf;
  if (with_plan) row += "," + std::to_string(r.ranks) + "," + std::to_string(r.waves);
  return row;
}

inline void write_csv(std::ostream& os, const std::vector<BenchReport>& rows, bool with_plan = false) {
  os << kCsvHeader << (with_plan ? ",ranks,waves" : "") << '\n';
  for (const auto& r : rows) os << csv_row(r, with_plan) << '\n';
}

namespace detail {
inline void check_kernel_args(std::size_t width, std::uint64_t iterations, std::size_t threads) {
  if (width < 1) throw ConfigError("bench.width", "must be >= 1");
  if (iterations < 1) throw ConfigError("bench.iterations", "must be >= 1");
  if (threads < 1) throw ConfigError("bench.threads", "must be >= 1");
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::max(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1e-9);
}
}  // namespace detail

/// Per lane: x = x * a + b, repeated. The lane values feed the checksum so the
/// loop cannot be elided.
inline BenchReport flops_kernel(std::size_t width, std::uint64_t iterations, std::size_t threads = 1) {
  detail::check_kernel_args(width, iterations, threads);
  constexpr double a = 1.0 - 1e-7;
  constexpr double b = 1e-7;
  std::vector<double> partial(threads, 0.0);

  const auto t0 = std::chrono::steady_clock::now();
#pragma omp parallel num_threads(static_cast<int>(threads))
  {
#ifdef _OPENMP
    const std::size_t tid = static_cast<std::size_t>(omp_get_thread_num());
#else
    const std::size_t tid = 0;
#endif
    std::vector<double> x(width);
    for (std::size_t j = 0; j < width; ++j) x[j] = static_cast<double>(j) / static_cast<double>(width);
    double* xp = x.data();
    for (std::uint64_t it = 0; it < iterations; ++it) {
      for (std::size_t j = 0; j < width; ++j) xp[j] = xp[j] * a + b;
    }
    double s = 0.0;
    for (double v : x) s += v;
    partial[tid] = s;
  }
  const double elapsed = detail::seconds_since(t0);

  BenchReport r;
  r.kernel = "flops";
  r.width = width;
  r.threads = threads;
  r.iterations = iterations;
  r.elapsed_s = elapsed;
  r.work = std::uint64_t{threads} * iterations * width * kFlopsPerElement;
  r.rate = static_cast<double>(r.work) / elapsed * 1e-9;
  for (double p : partial) r.checksum += p;
  r.timestamp = utc_timestamp();
  return r;
}

inline const char* to_string(TranscendentalKind k) noexcept { return k == TranscendentalKind::sincos ? "sincos" : "exp"; }

/// Per lane: acc += f(x); x += delta. checksum = sum(acc) / (iterations * threads),
/// so all-zero inputs give exactly `width` for both kinds (sin 0 + cos 0 = e^0 = 1).
inline BenchReport transcendental_kernel(TranscendentalKind kind, std::size_t width, std::uint64_t iterations,
                                         std::size_t threads = 1, double x0 = 0.0, double delta = 1e-9) {
  detail::check_kernel_args(width, iterations, threads);
  std::vector<double> partial(threads, 0.0);

  const auto t0 = std::chrono::steady_clock::now();
#pragma omp parallel num_threads(static_cast<int>(threads))
  {
#ifdef _OPENMP
    const std::size_t tid = static_cast<std::size_t>(omp_get_thread_num());
#else
    const std::size_t tid = 0;
#endif
    std::vector<double> x(width, x0), acc(width, 0.0);
    double* xp = x.data();
    double* ap = acc.data();
    if (kind == TranscendentalKind::sincos) {
      for (std::uint64_t it = 0; it < iterations; ++it) {
        for (std::size_t j = 0; j < width; ++j) {
          ap[j] += std::sin(xp[j]) + std::cos(xp[j]);
          xp[j] += delta;
        }
      }
    } else {
      for (std::uint64_t it = 0; it < iterations; ++it) {
        for (std::size_t j = 0; j < width; ++j) {
          ap[j] += std::exp(xp[j]);
          xp[j] += delta;
        }
      }
    }
    double s = 0.0;
    for (double v : acc) s += v;
    partial[tid] = s;
  }
  const double elapsed = detail::seconds_since(t0);

  BenchReport r;
  r.kernel = to_string(kind);
  r.width = width;
  r.threads = threads;
  r.iterations = iterations;
  r.elapsed_s = elapsed;
  r.work = std::uint64_t{threads} * iterations * width;
  r.rate = static_cast<double>(r.work) / elapsed * 1e-6;
  for (double p : partial) r.checksum += p;
  r.checksum /= static_cast<double>(iterations) * static_cast<double>(threads);
  r.timestamp = utc_timestamp();
  return r;
}

inline std::vector<BenchReport> flops_sweep(const std::vector<std::size_t>& widths, std::uint64_t iterations,
                                            std::size_t threads) {
  std::vector<BenchReport> rows;
  for (std::size_t w : widths) rows.push_back(flops_kernel(w, iterations, threads));
  return rows;
}

inline std::vector<BenchReport> transcendental_sweep(TranscendentalKind kind, const std::vector<std::size_t>& widths,
                                                     std::uint64_t iterations, std::size_t threads) {
  std::vector<BenchReport> rows;
  for (std::size_t w : widths) rows.push_back(transcendental_kernel(kind, w, iterations, threads));
  return rows;
}

/// Runs the configured simulation with I/O off until `duration` seconds have
/// passed and reports completed steps per second.
inline BenchReport measure_steps_per_second(const RunConfig& config, double duration, RunOptions options = {}) {
  if (!(duration > 0.0)) throw ConfigError("bench.duration", "must be > 0");
  RunConfig c = config;
  c.io.mode = IoMode::off;
  c.steps = std::numeric_limits<std::uint64_t>::max() / 2;
  c.log_interval = c.steps;
  const auto t0 = std::chrono::steady_clock::now();
  options.collect_state = false;
  options.stop = [t0, duration](std::size_t, std::uint64_t) { return detail::seconds_since(t0) >= duration; };
  const RunResult result = run_simulation(c, options);
  if (result.steps < 3) {
    throw Error(ErrorCategory::runtime, "insufficient duration: only " + std::to_string(result.steps) +
                                            " steps completed in " + std::to_string(duration) + " s (need >= 3)");
  }
  BenchReport r;
  r.kernel = "steps";
  r.width = c.grid.n_theta;
  r.iterations = result.steps;
  r.elapsed_s = result.wall_seconds;
  r.rate = static_cast<double>(result.steps) / result.wall_seconds;
  r.work = result.steps;
  r.checksum = result.r_final;
  r.ranks = result.plan.size();
  for (std::size_t i = 0; i < result.plan.size(); ++i) {
    r.threads = std::max(r.threads, result.plan.ranks[i].threads);
    r.waves = std::max(r.waves, result.plan.waves(i));
  }
  r.config_hash = config_hash_hex(c);
  r.timestamp = utc_timestamp();
  return r;
}

/// One steps/s row per equal-weight CPU rank count.
inline std::vector<BenchReport> steps_sweep(const RunConfig& config, const std::vector<std::size_t>& rank_counts,
                                            double duration, RunOptions options = {}) {
  std::vector<BenchReport> rows;
  for (std::size_t k : rank_counts) {
    RunConfig c = config;
    c.cpu.count = k;
    c.phi.count = 0;
    rows.push_back(measure_steps_per_second(c, duration, options));
  }
  return rows;
}

/// Single-rank wave harness: one rank owns theta bins [0, local) of a larger
/// grid and steps them with `workers` OpenMP threads; the remaining bins are a
/// frozen background whose moments are re-projected at every radius.
struct RankHarness {
  std::size_t n_theta = 1000;
  std::size_t local = 16;
  std::size_t workers = 16;
  std::size_t n_phi = 4;
  std::size_t n_energy = 64;
  double min_seconds = 0.25;
  std::size_t repeats = 5;
};

struct RankRate {
  std::size_t local = 0;
  std::size_t workers = 0;
  std::size_t waves = 0;
  double steps_per_second = 0.0;
  double per_worker = 0.0;
};

inline RankRate measure_rank_steps_per_second(const RankHarness& cfg) {
  if (cfg.local < 1 || cfg.local >= cfg.n_theta) throw ConfigError("local", "must lie in [1, n_theta)");
  GridConfig gc;
  gc.n_theta = cfg.n_theta;
  gc.n_phi = cfg.n_phi;
  gc.n_energy = cfg.n_energy;
  const auto grid = std::make_shared<const Grid>(Grid::build(gc));
  const Spectra spectra;
  Physics physics;
  StepConfig step;

  Ensemble active(grid, spectra, {0, cfg.local});
  const Ensemble background(grid, spectra, {cfg.local, cfg.n_theta - cfg.local});

  // Per background row and species: phi sums of the beam energy sums, plain
  // and weighted by cos(phi), sin(phi).
  struct RowSums {
    std::size_t theta;
    std::array<std::array<PackedSum, 3>, kSpeciesCount> s;
  };
  std::vector<RowSums> rows;
  for (std::size_t t = 0; t < background.n_theta_local(); ++t) {
    RowSums row{cfg.local + t, {}};
    for (std::size_t p = 0; p < grid->n_phi(); ++p) {
      const double phi = grid->phi_nodes()[p];
      for (auto s : kAllSpecies) {
        const PackedSum e = detail::beam_energy_sum(background.amplitudes(), background, s, background.beam(t, p));
        auto& acc = row.s[index_of(s)];
        acc[0] += e;
        acc[1] += e.scaled(std::cos(phi));
        acc[2] += e.scaled(std::sin(phi));
      }
    }
    rows.push_back(row);
  }

  const int workers = static_cast<int>(cfg.workers);
  MomentProvider provider = [&](const AmplitudeBuffer& z, double r) {
    const RankMoments rm = local_chunk_pieces(z, active, active.slice(), r, kDefaultChunkSize, workers);
    MomentSet m = reduce_moments(std::span<const RankMoments>(&rm, 1), kDefaultChunkSize);
    for (const auto& row : rows) {
      const LocalAngle a = grid->local_angle(row.theta, r);
      for (std::size_t s = 0; s < kSpeciesCount; ++s) {
        auto& sm = m.species[s];
        sm.m0 += row.s[s][0];
        sm.m1[0] += row.s[s][0].scaled(a.cos_theta);
        sm.m1[1] += row.s[s][1].scaled(a.sin_theta);
        sm.m1[2] += row.s[s][2].scaled(a.sin_theta);
      }
    }
    return m;
  };

  RankRate out;
  out.local = cfg.local;
  out.workers = cfg.workers;
  out.waves = thread_iterations(cfg.local, cfg.workers);
  for (std::size_t rep = 0; rep < std::max<std::size_t>(1, cfg.repeats); ++rep) {
    active.reset_to_emission_state();
    MidpointStepper stepper(active, physics, step, provider, workers);
    stepper.step(active.radius(), step.h, active.radius() + step.h);  // warm-up
    std::uint64_t steps = 0;
    const auto t0 = std::chrono::steady_clock::now();
    double elapsed = 0.0;
    do {
      const double r = active.radius();
      stepper.step(r, step.h, r + step.h);
      ++steps;
      elapsed = detail::seconds_since(t0);
    } while (elapsed < cfg.min_seconds);
    out.steps_per_second = std::max(out.steps_per_second, static_cast<double>(steps) / elapsed);
  }
  out.per_worker = out.steps_per_second / static_cast<double>(cfg.workers);
  return out;
}

}  // namespace xflat
