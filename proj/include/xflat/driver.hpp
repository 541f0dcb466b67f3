#pragma once

// Full simulation run: one std::thread per simulated rank, each owning a
// contiguous theta slice and an OpenMP worker team, coupled through an
// in-process exchange.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "xflat/config.hpp"
#include "xflat/error.hpp"
#include "xflat/exchange.hpp"
#include "xflat/integrator.hpp"
#include "xflat/moments.hpp"
#include "xflat/snapshot.hpp"
#include "xflat/topology.hpp"

namespace xflat {

struct RunOptions {
  /// Replaces every device's thread count.
  std::optional<std::size_t> threads;
  /// Structured progress records, one per log interval.
  std::ostream* log = nullptr;
  /// Keep the final global state in the result.
  bool collect_state = true;
  /// Local stop request, evaluated on every rank after every step; the run
  /// ends when any rank asks.
  std::function<bool(std::size_t rank, std::uint64_t steps_done)> stop;
  std::chrono::milliseconds exchange_timeout = std::chrono::seconds(120);
};

struct RunResult {
  RankPlan plan;
  std::uint64_t steps = 0;
  double r_final = 0.0;
  double max_norm_drift = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::filesystem::path> files;
  std::vector<std::filesystem::path> files_by_writer_order;
  AmplitudeBuffer state;
  std::string config_hash;
};

inline RankPlan plan_for(const RunConfig& c, std::optional<std::size_t> threads = std::nullopt) {
  auto devices = c.devices();
  if (threads) {
    for (auto& d : devices) d.threads = *threads;
  }
  return make_plan(c.grid.n_theta, devices, c.chunk_size);
}

inline void write_manifest(const RunConfig& c, const std::vector<std::filesystem::path>& files) {
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  std::sort(names.begin(), names.end());
  std::string text = "# xflat run manifest\nconfig_hash = " + config_hash_hex(c) + "\n\n[config]\n" +
                     canonical_config(c) + "\n[files]\n";
  for (const auto& n : names) text += n + "\n";
  write_file_atomic(c.io.dir, "manifest.txt",
                    std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Runs config.steps steps (or until options.stop) on the ranks of the plan.
inline RunResult run_simulation(const RunConfig& config, const RunOptions& options = {}) {
  RunConfig c = config;
  validate(c);
  const RankPlan plan = plan_for(c, options.threads);
  const auto grid = std::make_shared<const Grid>(Grid::build(c.grid));
  const std::size_t n_ranks = plan.size();
  InProcessExchange ex(n_ranks, c.chunk_size, c.grid.n_theta, options.exchange_timeout);

  if (c.io.mode != IoMode::off) {
    std::error_code ec;
    std::filesystem::create_directories(c.io.dir, ec);
    if (ec) throw IoError("cannot create output directory " + c.io.dir + ": " + ec.message());
  }
  if (c.io.mode == IoMode::staged) {
    for (const auto& r : plan.ranks) (void)stager_for(plan, r.rank_id);
  }
  const std::uint64_t snap_interval = c.snapshot_interval();

  struct RankOutput {
    std::unique_ptr<Ensemble> ensemble;
    Diagnostics diagnostics;
    std::vector<std::filesystem::path> files;
    std::exception_ptr error;
  };
  std::vector<RankOutput> out(n_ranks);
  std::mutex log_mutex;

  const auto rank_main = [&](std::size_t rank) {
    const RankAssignment& me = plan.ranks[rank];
    const int threads = static_cast<int>(me.threads);
    auto& ens = out[rank].ensemble;
    ens = std::make_unique<Ensemble>(grid, c.spectra, me.range());
    const Ensemble& ref = *ens;

    EvolveOptions opts;
    opts.threads = threads;
    opts.moments = [&ex, &ref, &c, rank, threads](const AmplitudeBuffer& z, double r) {
      return ex.allreduce_moments(rank, local_chunk_pieces(z, ref, ref.slice(), r, c.chunk_size, threads));
    };
    if (c.io.mode != IoMode::off) {
      const auto owners = staged_owners(plan, rank);
      opts.observers.push_back({"snapshot", snap_interval, [&, rank, owners](const Ensemble& e, std::uint64_t step) {
                                  if (c.io.mode == IoMode::direct || !me.accelerator) {
                                    out[rank].files.push_back(write_direct(e, step, rank, c.io.dir));
                                  }
                                  if (c.io.mode == IoMode::staged) {
                                    if (me.accelerator) {
                                      send_staged(ex, e, step, rank, stager_for(plan, rank));
                                    } else {
                                      for (std::size_t owner : owners) {
                                        out[rank].files.push_back(receive_staged(ex, rank, owner, c.io.dir));
                                      }
                                    }
                                  }
                                }});
    }
    const auto t0 = std::chrono::steady_clock::now();
    opts.observers.push_back({"log", c.log_interval, [&, rank, t0](const Ensemble& e, std::uint64_t step) {
                                const double drift = ex.max(rank, max_norm_deviation(e));
                                if (rank == 0 && options.log) {
                                  const double elapsed =
                                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                                  char line[160];
                                  std::snprintf(line, sizeof line,
                                                "step=%llu r=%.9g max_norm_drift=%.3e elapsed_s=%.3f\n",
                                                static_cast<unsigned long long>(step), e.radius(), drift, elapsed);
                                  std::lock_guard lock(log_mutex);
                                  *options.log << line << std::flush;
                                }
                              }});
    if (options.stop) {
      opts.stop = [&, rank](std::uint64_t done) { return ex.any(rank, options.stop(rank, done)); };
    }
    out[rank].diagnostics = evolve_steps(*ens, c.steps, c.physics, c.step, opts);
  };

  const auto start = std::chrono::steady_clock::now();
  std::vector<std::thread> threads;
  threads.reserve(n_ranks);
  for (std::size_t r = 0; r < n_ranks; ++r) {
    threads.emplace_back([&, r] {
      try {
        rank_main(r);
      } catch (const std::exception& e) {
        out[r].error = std::current_exception();
        ex.abort("rank " + std::to_string(r) + ": " + e.what());
      } catch (...) {
        out[r].error = std::current_exception();
        ex.abort("rank " + std::to_string(r) + " failed");
      }
    });
  }
  for (auto& t : threads) t.join();

  // Report the originating failure, not the ranks that were woken by it.
  std::exception_ptr first, origin;
  for (auto& o : out) {
    if (!o.error) continue;
    if (!first) first = o.error;
    try {
      std::rethrow_exception(o.error);
    } catch (const PeerAbortError&) {
    } catch (...) {
      if (!origin) origin = o.error;
    }
  }
  if (origin) std::rethrow_exception(origin);
  if (first) std::rethrow_exception(first);

  RunResult result;
  result.plan = plan;
  result.config_hash = config_hash_hex(c);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.steps = out.front().diagnostics.steps;
  result.r_final = out.front().diagnostics.r_final;
  for (auto& o : out) {
    result.max_norm_drift = std::max(result.max_norm_drift, o.diagnostics.max_norm_drift);
    result.files_by_writer_order.insert(result.files_by_writer_order.end(), o.files.begin(), o.files.end());
  }
  result.files = result.files_by_writer_order;
  std::sort(result.files.begin(), result.files.end());
  if (options.collect_state) {
    std::vector<Snapshot> parts;
    for (std::size_t r = 0; r < n_ranks; ++r) {
      parts.push_back({make_header(*out[r].ensemble, result.steps, r, r), out[r].ensemble->amplitudes(), 0});
    }
    result.state = assemble_snapshots(std::move(parts));
  }
  if (c.io.mode != IoMode::off) write_manifest(c, result.files);
  return result;
}

}  // namespace xflat
