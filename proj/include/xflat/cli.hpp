#pragma once

// Command dispatch for the xflat tool. Lives in the library so tests can drive
// it without spawning processes.
//
//   xflat run        [--config F] [--out DIR] [--threads N] [--key=value ...]
//   xflat partition  [--n-theta N] [--ranks K] [--threads N] [--config F]
//   xflat bench      flops|transc|steps [--width W] [--iterations N] [--sweep] ...
//   xflat inspect    SNAPSHOT
//   xflat validate   [--seed S]

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "xflat/bench.hpp"
#include "xflat/config.hpp"
#include "xflat/driver.hpp"
#include "xflat/error.hpp"
#include "xflat/snapshot.hpp"
#include "xflat/topology.hpp"
#include "xflat/validation.hpp"

namespace xflat {

/// Dotted `--key=value` / `--key value` overrides from unparsed arguments.
inline std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() <= 2) throw UsageError("unexpected argument '" + a + "'");
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw UsageError("option '" + a + "' needs a value");
    }
    if (out.back().first.find('.') == std::string::npos && out.back().first != "seed") {
      throw UsageError("unknown option '--" + out.back().first + "'");
    }
  }
  return out;
}

namespace detail {

struct CommonFlags {
  std::string config;
  std::string out_dir;
  std::optional<std::size_t> threads;
  std::optional<double> duration;
};

inline RunConfig load_config(const CommonFlags& f, const std::vector<std::string>& extras) {
  auto overrides = parse_overrides(extras);
  if (!f.out_dir.empty()) overrides.emplace_back("io.dir", f.out_dir);
  if (f.threads) {
    overrides.emplace_back("devices.cpu.threads", std::to_string(*f.threads));
    overrides.emplace_back("devices.phi.threads", std::to_string(*f.threads));
    overrides.emplace_back("bench.threads", std::to_string(*f.threads));
  }
  if (f.duration) overrides.emplace_back("bench.duration", format_double(*f.duration));
  return parse_config(f.config, overrides);
}

inline void add_common(CLI::App* app, CommonFlags& f, bool with_out = true) {
  app->add_option("--config", f.config, "INI configuration file");
  if (with_out) app->add_option("--out", f.out_dir, "output directory (io.dir)");
  app->add_option("--threads", f.threads, "worker threads per rank")->check(CLI::PositiveNumber);
  app->add_option("--duration", f.duration, "benchmark duration in seconds (bench.duration)");
  app->allow_extras();
}

inline int cmd_run(const CommonFlags& f, const std::vector<std::string>& extras, std::ostream& out) {
  const RunConfig c = load_config(f, extras);
  out << "config_hash=" << config_hash_hex(c) << '\n';
  out << format_plan(plan_for(c));
  RunOptions options;
  options.log = &out;
  options.collect_state = false;
  const RunResult r = run_simulation(c, options);
  char line[200];
  std::snprintf(line, sizeof line, "done steps=%llu r=%.9g max_norm_drift=%.3e wall_s=%.3f snapshots=%zu\n",
                static_cast<unsigned long long>(r.steps), r.r_final, r.max_norm_drift, r.wall_seconds, r.files.size());
  out << line;
  if (c.io.mode != IoMode::off) out << "manifest=" << (std::filesystem::path(c.io.dir) / "manifest.txt").string() << '\n';
  return 0;
}

inline int cmd_partition(const CommonFlags& f, const std::vector<std::string>& extras, std::optional<std::size_t> n_theta,
                         std::optional<std::size_t> ranks, std::ostream& out) {
  RunConfig c = load_config(f, extras);
  if (n_theta) c.grid.n_theta = *n_theta;
  std::vector<DeviceSpec> devices = c.devices();
  if (ranks) devices = {DeviceSpec{"cpu", *ranks, Weight(1), f.threads.value_or(c.cpu.threads)}};
  out << format_plan(make_plan(c.grid.n_theta, devices, c.chunk_size));
  return 0;
}

inline int cmd_bench(const std::string& kind, const CommonFlags& f, const std::vector<std::string>& extras,
                     std::optional<std::size_t> width, std::optional<std::uint64_t> iterations, bool sweep,
                     const std::string& csv_path, const std::vector<std::size_t>& ranks_sweep, std::ostream& out) {
  RunConfig c = load_config(f, extras);
  if (width) c.bench.width = *width;
  if (iterations) c.bench.iterations = *iterations;
  const std::vector<std::size_t> widths = sweep ? c.bench.widths : std::vector<std::size_t>{c.bench.width};

  std::vector<BenchReport> rows;
  bool with_plan = false;
  if (kind == "flops") {
    rows = flops_sweep(widths, c.bench.iterations, c.bench.threads);
  } else if (kind == "transc") {
    rows = transcendental_sweep(c.bench.transcendental, widths, c.bench.iterations, c.bench.threads);
  } else if (kind == "steps") {
    with_plan = true;
    RunOptions options;
    if (f.threads) options.threads = *f.threads;
    if (ranks_sweep.empty()) {
      rows.push_back(measure_steps_per_second(c, c.bench.duration, options));
    } else {
      rows = steps_sweep(c, ranks_sweep, c.bench.duration, options);
    }
  } else {
    throw UsageError("unknown bench kernel '" + kind + "' (expected flops, transc or steps)");
  }

  const std::string path = !csv_path.empty() ? csv_path : c.bench.csv;
  if (path.empty()) {
    write_csv(out, rows, with_plan);
  } else {
    std::ofstream file(path);
    if (!file) throw IoError("cannot open " + path + " for writing");
    write_csv(file, rows, with_plan);
    out << "wrote " << rows.size() << " rows to " << path << '\n';
  }
  return 0;
}

inline int cmd_inspect(const std::string& path, std::ostream& out) {
  const Snapshot s = read_snapshot(path);
  const SnapshotHeader& h = s.header;
  out << "file          " << path << '\n'
      << "format        XFLT v" << h.version << '\n'
      << "dims          n_flavors=" << h.n_flavors << " n_phi=" << h.n_phi << " n_energy=" << h.n_energy
      << " n_theta_local=" << h.n_theta_local << '\n'
      << "theta_offset  " << h.theta_offset << '\n'
      << "step          " << h.step << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "radius        %.17g\n", h.radius);
  out << line;
  out << "writer/owner  " << h.writer_rank << "/" << h.owner_rank << '\n';
  std::snprintf(line, sizeof line, "crc32         %08x\n", s.crc);
  out << line;

  const auto& L = s.amplitudes.layout();
  for (auto sp : kAllSpecies) {
    double p_sum = 0.0, p_min = 1.0, p_max = 0.0, drift = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < L.n_beams; ++b) {
      for (std::size_t k = 0; k < L.n_energy; ++k) {
        double n2 = 0.0;
        for (std::size_t c = 0; c < L.n_flavors; ++c) {
          const double re = s.amplitudes.re(sp, b, c)[k], im = s.amplitudes.im(sp, b, c)[k];
          n2 += re * re + im * im;
        }
        const double re0 = s.amplitudes.re(sp, b, 0)[k], im0 = s.amplitudes.im(sp, b, 0)[k];
        const double p = re0 * re0 + im0 * im0;
        p_sum += p;
        p_min = std::min(p_min, p);
        p_max = std::max(p_max, p);
        drift = std::max(drift, std::abs(std::sqrt(n2) - 1.0));
        ++n;
      }
    }
    std::snprintf(line, sizeof line, "%-13s P_ee mean=%.9f min=%.9f max=%.9f max_norm_drift=%.3e\n", to_string(sp),
                  n ? p_sum / static_cast<double>(n) : 0.0, p_min, p_max, drift);
    out << line;
  }
  return 0;
}

inline int cmd_validate(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& check : run_validation(seed)) {
    out << (check.passed ? "PASS " : "FAIL ") << check.name << ": " << check.detail << '\n';
    ok = ok && check.passed;
  }
  return ok ? 0 : static_cast<int>(ErrorCategory::runtime);
}

}  // namespace detail

/// Runs the tool; returns the process exit status.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"xflat: collective neutrino oscillations in the extended bulb model"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  detail::CommonFlags run_flags, part_flags, bench_flags;

  auto* run = app.add_subcommand("run", "run a simulation");
  detail::add_common(run, run_flags);

  auto* part = app.add_subcommand("partition", "print the rank plan without computing");
  detail::add_common(part, part_flags, false);
  std::optional<std::size_t> n_theta, ranks;
  part->add_option("--n-theta", n_theta, "polar-angle bins");
  part->add_option("--ranks", ranks, "equal-weight ranks (default: devices from config)")->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "throughput benchmarks");
  detail::add_common(bench, bench_flags, false);
  std::string kind;
  std::optional<std::size_t> width;
  std::optional<std::uint64_t> iterations;
  bool sweep = false;
  std::string csv_path;
  std::vector<std::size_t> ranks_sweep;
  bench->add_option("kind", kind, "flops, transc or steps")->required();
  bench->add_option("--width", width, "vector width")->check(CLI::PositiveNumber);
  bench->add_option("--iterations", iterations, "iterations per thread")->check(CLI::PositiveNumber);
  bench->add_flag("--sweep", sweep, "sweep bench.widths");
  bench->add_option("--csv", csv_path, "write CSV here instead of stdout");
  bench->add_option("--ranks", ranks_sweep, "steps: equal-weight rank counts to sweep")->delimiter(',');

  auto* inspect = app.add_subcommand("inspect", "print a snapshot header and summary");
  std::string snapshot_path;
  inspect->add_option("snapshot", snapshot_path, "snapshot file")->required();

  auto* validate_cmd = app.add_subcommand("validate", "run the built-in oracle checks");
  std::uint64_t seed = 0;
  validate_cmd->add_option("--seed", seed, "seed for random test ensembles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return static_cast<int>(ErrorCategory::usage);
  }

  try {
    if (*run) return detail::cmd_run(run_flags, run->remaining(), out);
    if (*part) return detail::cmd_partition(part_flags, part->remaining(), n_theta, ranks, out);
    if (*bench) {
      return detail::cmd_bench(kind, bench_flags, bench->remaining(), width, iterations, sweep, csv_path, ranks_sweep,
                               out);
    }
    if (*inspect) return detail::cmd_inspect(snapshot_path, out);
    if (*validate_cmd) return detail::cmd_validate(seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.category() == ErrorCategory::usage) err << app.help();
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::runtime);
  }
  err << app.help();
  return static_cast<int>(ErrorCategory::usage);
}

}  // namespace xflat
